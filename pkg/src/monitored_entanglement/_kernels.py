"""Compiled per-trajectory kernels for the exponential scheme.

Each kernel loops over the trajectory axis and handles a single 4-vector or
4x4 matrix at a time, so the result for one trajectory never depends on the
rest of the batch.
"""

from __future__ import annotations

import numpy as np
from numba import njit

TAYLOR_TOL = 1e-17
MAX_TERMS = 40


@njit(cache=True)
def _expm_vec(X, v, out):
    """out <- exp(X) v by scaled Taylor series (X is 4x4, v a 4-vector).

    The degree is fixed in advance from the bound theta^(m+1)/(m+1)! on the
    remainder, with theta an upper bound of the scaled infinity norm.
    """
    norm = 0.0
    for a in range(4):
        s = 0.0
        for b in range(4):
            s += abs(X[a, b].real) + abs(X[a, b].imag)
        if s > norm:
            norm = s
    steps = 1
    if norm > 0.5:
        steps = int(np.ceil(norm / 0.5))
    theta = norm / steps
    m = 1
    bound = theta
    while bound > TAYLOR_TOL and m < MAX_TERMS:
        m += 1
        bound *= theta / m
    o0, o1, o2, o3 = v[0], v[1], v[2], v[3]
    for _ in range(steps):
        t0, t1, t2, t3 = o0, o1, o2, o3
        for k in range(1, m + 1):
            scale = 1.0 / (k * steps)
            n0 = (X[0, 0] * t0 + X[0, 1] * t1 + X[0, 2] * t2 + X[0, 3] * t3) * scale
            n1 = (X[1, 0] * t0 + X[1, 1] * t1 + X[1, 2] * t2 + X[1, 3] * t3) * scale
            n2 = (X[2, 0] * t0 + X[2, 1] * t1 + X[2, 2] * t2 + X[2, 3] * t3) * scale
            n3 = (X[3, 0] * t0 + X[3, 1] * t1 + X[3, 2] * t2 + X[3, 3] * t3) * scale
            t0, t1, t2, t3 = n0, n1, n2, n3
            o0 += n0
            o1 += n1
            o2 += n2
            o3 += n3
    out[0] = o0
    out[1] = o1
    out[2] = o2
    out[3] = o3


@njit(cache=True)
def _build_generator(D, R, dw, dt, X):
    d = R.shape[0]
    for a in range(4):
        for b in range(4):
            acc = D[a, b] * dt
            for j in range(d):
                acc += R[j, a, b] * dw[j]
            X[a, b] = acc


@njit(cache=True)
def pure_step(phi, D, R, noise, dt, physical, dw_out):
    """Advance each phi[i] by exp(D dt + sum_j R_j dW_j).

    In physical mode the output increments are noise + m dt with
    m_j = 2 Re <psi|R_j psi>, and the result is normalized.
    """
    n = phi.shape[0]
    d = R.shape[0]
    X = np.empty((4, 4), dtype=np.complex128)
    out = np.empty(4, dtype=np.complex128)
    for i in range(n):
        v = phi[i]
        for j in range(d):
            if physical:
                acc = 0j
                for a in range(4):
                    s = 0j
                    for b in range(4):
                        s += R[j, a, b] * v[b]
                    acc += np.conj(v[a]) * s
                dw_out[i, j] = noise[i, j] + 2.0 * acc.real * dt
            else:
                dw_out[i, j] = noise[i, j]
        _build_generator(D, R, dw_out[i], dt, X)
        _expm_vec(X, v, out)
        if physical:
            nrm = 0.0
            for a in range(4):
                nrm += out[a].real ** 2 + out[a].imag ** 2
            nrm = np.sqrt(nrm)
            for a in range(4):
                phi[i, a] = out[a] / nrm
        else:
            for a in range(4):
                phi[i, a] = out[a]


@njit(cache=True)
def mixed_step(sig, D, R, noise, dt, physical, dw_out):
    """sigma[i] <- M sigma[i] M^dag with M = exp(D dt + sum_j R_j dW_j)."""
    n = sig.shape[0]
    d = R.shape[0]
    X = np.empty((4, 4), dtype=np.complex128)
    Z = np.empty((4, 4), dtype=np.complex128)
    col = np.empty(4, dtype=np.complex128)
    out = np.empty(4, dtype=np.complex128)
    for i in range(n):
        s = sig[i]
        for j in range(d):
            if physical:
                acc = 0j
                for a in range(4):
                    for b in range(4):
                        acc += R[j, a, b] * s[b, a]
                dw_out[i, j] = noise[i, j] + 2.0 * acc.real * dt
            else:
                dw_out[i, j] = noise[i, j]
        _build_generator(D, R, dw_out[i], dt, X)
        # Z = M sigma, column by column
        for c in range(4):
            for a in range(4):
                col[a] = s[a, c]
            _expm_vec(X, col, out)
            for a in range(4):
                Z[a, c] = out[a]
        # sigma' = M Z^dag
        for c in range(4):
            for a in range(4):
                col[a] = np.conj(Z[c, a])
            _expm_vec(X, col, out)
            for a in range(4):
                s[a, c] = out[a]
        tr = 0.0
        for a in range(4):
            tr += s[a, a].real
        for a in range(4):
            for b in range(a, 4):
                h = 0.5 * (s[a, b] + np.conj(s[b, a]))
                if physical:
                    h = h / tr
                s[a, b] = h
                s[b, a] = np.conj(h)


@njit(cache=True)
def intensities_pure(phi, E):
    n = phi.shape[0]
    K = E.shape[0]
    out = np.empty((n, K))
    for i in range(n):
        for k in range(K):
            acc = 0j
            for a in range(4):
                s = 0j
                for b in range(4):
                    s += E[k, a, b] * phi[i, b]
                acc += np.conj(phi[i, a]) * s
            out[i, k] = acc.real
    return out


@njit(cache=True)
def intensities_mixed(sig, E):
    n = sig.shape[0]
    K = E.shape[0]
    out = np.empty((n, K))
    for i in range(n):
        for k in range(K):
            acc = 0j
            for a in range(4):
                for b in range(4):
                    acc += E[k, a, b] * sig[i, b, a]
            out[i, k] = acc.real
    return out
