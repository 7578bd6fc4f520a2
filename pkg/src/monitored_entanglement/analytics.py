"""Concurrence along trajectories and closed-form reference curves.

The oracles here are exact solutions for particular presets. Tests and the
CLI overlay them on simulated estimates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .engine import TrajectoryRecord, _rk4_matrix, evolve_master
from .entanglement import (
    chi_batch,
    concurrence_margin,
    concurrence_mixed,
    concurrence_mixed_batch,
    is_x_state,
    x_state_margins,
)
from .model import (
    Model,
    UnsupportedClassification,
    detection_operators,
    liouvillian_superoperator,
    local_coefficients,
)
from .qcore import I4, SZ, SZSZ, as_matrix, as_state, check_density, local

ESD_TIME_TOL = 1e-10


@dataclass(frozen=True)
class OracleCurve:
    """A closed-form time series; call it with an array of times."""

    formula_id: str
    params: dict
    func: Callable[[np.ndarray], np.ndarray] = field(repr=False)

    def __call__(self, t):
        return self.func(np.asarray(t, dtype=float))


# -- trajectories --------------------------------------------------------------


def _valid_points(rec: TrajectoryRecord) -> int:
    dead = np.nonzero(rec.weight <= 0)[0]
    return int(dead[0]) if dead.size else len(rec.grid)


def aposteriori_concurrence(rec: TrajectoryRecord) -> np.ndarray:
    """Concurrence of the normalized state at each grid point.

    The series stops at the first point where the weight vanished.
    """
    n = _valid_points(rec)
    states = rec.states[:n]
    if rec.pure:
        norm2 = np.einsum("na,na->n", states.conj(), states).real
        return np.abs(chi_batch(states)) / norm2
    tr = np.trace(states, axis1=1, axis2=2).real
    return concurrence_mixed_batch(states / tr[:, None, None])


def bilinear(phi, op) -> complex:
    """<T phi | op phi> = phi^T op phi."""
    p = as_state(phi)
    return complex(p @ as_matrix(op, 4) @ p)


def d_form(phi) -> complex:
    """D = <T phi | sigma_z x sigma_z phi>."""
    return bilinear(phi, SZSZ)


def e_form(phi) -> complex:
    """E = <T phi | (sigma_z x 1 + 1 x sigma_z) phi>."""
    return bilinear(phi, local(SZ, 1) + local(SZ, 2))


def _segment_coefficients(m: Model, grid: np.ndarray):
    """local_coefficients for the segment containing each step's left point."""
    bps = np.asarray(m.breakpoints)
    h = grid[1] - grid[0]
    seg = np.searchsorted(bps, grid[:-1] + 1e-12 * h, side="right") - 1
    cache = {int(s): local_coefficients(m, float(bps[s])) for s in np.unique(seg)}
    return [cache[int(s)] for s in seg]


def aposteriori_concurrence_reconstruction(rec: TrajectoryRecord, m: Model) -> np.ndarray:
    """Concurrence from the stochastic-exponential formula, driven by the record.

    The innovations are dW_hat = dW - m dt, with dW the recorded output
    increments and m_j = 2 Re <psi|R_j psi>. The stochastic integral of n_j
    uses the trapezoid rule minus the Ito correction b_jj dt / 2, where b_jj is
    the diffusion coefficient of n_j along W_hat_j. Per path this agrees with
    the concurrence of the simulated state to O(dt). The jump factor
    |d_k|/mu_k uses the state at the start of the step containing the count,
    and steps with counts fall back to the left-point rule.
    """
    if not rec.pure:
        raise ValueError("the reconstruction formula needs a pure-state record")
    grid = rec.grid
    n_pts = _valid_points(rec)
    psi = rec.normalized_states()[:n_pts]
    coeffs = _segment_coefficients(m, grid)
    bps = np.asarray(m.breakpoints)
    ops_cache = {}
    jumps_at: dict[int, list[int]] = {}
    for ev in rec.counts:
        step = max(int(np.searchsorted(grid, ev.time - 1e-12 * (grid[1] - grid[0]), side="left")) - 1, 0)
        jumps_at.setdefault(step, []).append(ev.channel)

    def drift_terms(p, R, co):
        """m_j, n_j and b_jj at state p."""
        Rp = [r @ p for r in R[:co.d]]
        mj = np.array([2 * np.vdot(p, x).real for x in Rp])
        nj = co.ell[:co.d].real - mj
        bjj = np.empty(co.d)
        for j in range(co.d):
            B = R[j] + R[j].conj().T
            bjj[j] = -(2 * np.vdot(Rp[j], B @ p).real - mj[j] ** 2)
        return mj, nj, bjj

    log_c = np.zeros(n_pts)
    dead = np.zeros(n_pts, dtype=bool)
    acc = 0.0
    killed = False
    for n in range(n_pts - 1):
        t = grid[n]
        dt = grid[n + 1] - t
        co = coeffs[n]
        key = int(np.searchsorted(bps, t + 1e-12 * dt, side="right") - 1)
        if key not in ops_cache:
            ops_cache[key] = detection_operators(m, float(bps[key]))
        R = ops_cache[key].R
        p = psi[n]
        mj, nj, bjj = drift_terms(p, R, co)
        jumps = jumps_at.get(n, [])
        n_right = drift_terms(psi[n + 1], R, co)[1] if co.d else None
        if co.d:
            dw_hat = rec.wiener_increments[n, :co.d] - mj * dt
            if jumps:
                acc += float(np.sum(nj * dw_hat))
            else:
                acc += float(np.sum(0.5 * (nj + n_right) * dw_hat - 0.5 * bjj * dt))
            acc -= float(np.sum(co.c[:co.d] + nj ** 2 / 2)) * dt
        mus = [float(np.linalg.norm(R[co.d + k] @ p) ** 2) for k in range(len(R) - co.d)]
        for k, mu in enumerate(mus):
            acc -= (co.c[co.d + k] + abs(co.det[k]) - mu) * dt
        for k in jumps:
            if abs(co.det[k]) == 0.0 or mus[k] == 0.0:
                killed = True
            else:
                acc += math.log(abs(co.det[k]) / mus[k])
        log_c[n + 1] = acc
        dead[n + 1] = killed
    c0 = float(np.abs(chi_batch(psi[0])))
    out = c0 * np.exp(log_c)
    out[dead] = 0.0
    return out


# -- mean a posteriori concurrence for local detection ----------------------------


def integrated_decay(m: Model, t: np.ndarray) -> np.ndarray:
    """int_0^t c(s) ds for a piecewise-constant local model."""
    t = np.asarray(t, dtype=float)
    bps = list(m.breakpoints)
    rates = [local_coefficients(m, b).c_total for b in bps]
    out = np.zeros_like(t)
    for i, (start, rate) in enumerate(zip(bps, rates)):
        stop = bps[i + 1] if i + 1 < len(bps) else np.inf
        out += rate * np.clip(np.minimum(t, stop) - start, 0.0, None)
    return out


def oracle_mean_concurrence_local(m: Model, c0: float) -> OracleCurve:
    """C0 exp(-int_0^t c): the mean a posteriori concurrence, an upper bound for the a priori one.

    Raises :class:`NonLocalError` when a detection operator is not local.
    """
    local_coefficients(m, 0.0)  # validates locality
    rates = [local_coefficients(m, b).c_total for b in m.breakpoints]
    return OracleCurve("mean_concurrence", dict(c0=c0, c=rates),
                       lambda t: c0 * np.exp(-integrated_decay(m, t)))


def gammadelta_c(gamma_plus: float, delta: float, variant: int) -> float:
    """Decay contribution of one qubit's channels for the three unravelings."""
    gm = gamma_plus + delta
    if variant == 1:
        return gamma_plus + delta / 2
    if variant == 2:
        return delta / 2
    if variant == 3:
        return 0.5 * (math.sqrt(gm) - math.sqrt(gamma_plus)) ** 2
    raise ValueError(f"variant must be 1, 2 or 3, got {variant!r}")


def single_jump_c(h, ell: complex) -> float:
    """c for one counting channel with local operator sum_i h_i sigma_i + ell/2."""
    h = np.asarray(h, dtype=complex)
    det = ell ** 2 / 4 - np.sum(h ** 2)
    return float(abs(ell) ** 2 / 4 - abs(det) + np.sum(np.abs(h) ** 2))


# -- non-local detection ---------------------------------------------------------


def gamma_pm(gamma: float, theta: float) -> tuple[complex, complex]:
    e = np.exp(2j * theta)
    return gamma * (1 + e), gamma * (1 - e)


def oracle_nonlocal_chi(gamma: float, theta: float, chi0: complex, d0: complex, t) -> np.ndarray:
    """chi(phi(t)) for the non-local diffusive preset with omega0 = 0.

    Solves d chi/dt = -gamma chi + gamma e^{2i theta} D and
    d D/dt = gamma e^{2i theta} chi - gamma D, so chi + D decays at
    gamma_- = gamma(1 - e^{2i theta}) and chi - D at gamma_+:

        chi(t) = 1/2 e^{-gamma_- t}(chi0 + D0) + 1/2 e^{-gamma_+ t}(chi0 - D0)

    With chi0 = 0 this gives |chi| = 1/2 |D0| |e^{-gamma_+ t} - e^{-gamma_- t}|.
    """
    gp, gm = gamma_pm(gamma, theta)
    t = np.asarray(t, dtype=float)
    return 0.5 * np.exp(-gm * t) * (chi0 + d0) + 0.5 * np.exp(-gp * t) * (chi0 - d0)


def chi_pm_residual(rec: TrajectoryRecord, gamma: float, theta: float, omega0: float) -> np.ndarray:
    """Residual of chi +/- D = e^{-g t}(chi0 +/- D0) -/+ i w0 int_0^t e^{-g(t-s)} E(s) ds.

    Here g = gamma_- for the upper sign and gamma_+ for the lower one. The
    check runs along a reference-measure pure record, with E taken from the
    simulated state and trapezoidal quadrature. Returns the larger absolute
    residual of the two signs at each grid point.
    """
    phi = rec.states
    t = rec.grid
    chis = chi_batch(phi)
    Ds = np.einsum("na,ab,nb->n", phi, SZSZ, phi)
    Es = np.einsum("na,ab,nb->n", phi, local(SZ, 1) + local(SZ, 2), phi)
    gp, gm = gamma_pm(gamma, theta)
    out = np.zeros(len(t))
    for sign, g in ((1, gm), (-1, gp)):
        lhs = chis + sign * Ds
        integ = np.exp(-g * t) * cumulative_trapezoid(np.exp(g * t) * Es, t, initial=0.0)
        rhs = np.exp(-g * t) * (chis[0] + sign * Ds[0]) - sign * 1j * omega0 * integ
        out = np.maximum(out, np.abs(lhs - rhs))
    return out


# -- a priori concurrence and sudden death --------------------------------------------


def esd_apriori_curve(gamma: float, t) -> np.ndarray:
    """1/2 (1 + e^{-gamma t})^2 - 1, the a priori concurrence before death."""
    t = np.asarray(t, dtype=float)
    return 0.5 * (1 + np.exp(-gamma * t)) ** 2 - 1


def esd_time_local(gamma: float) -> float:
    return -math.log(math.sqrt(2) - 1) / gamma


def replacement_apriori_state(rho0, nu: float, t) -> np.ndarray:
    """rho0 e^{-nu t} + (1 - e^{-nu t}) 1/4 for each time in ``t``."""
    rho0 = check_density(rho0)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    e = np.exp(-nu * t)[:, None, None]
    return rho0 * e + (1 - e) * I4 / 4


def _margin(rho) -> float:
    """Unclipped concurrence margin; 2 max(C1, C2) for X states."""
    if is_x_state(rho):
        return 2 * max(x_state_margins(rho))
    return concurrence_margin(rho)


def _bisect(f: Callable[[float], float], a: float, b: float, tol: float = ESD_TIME_TOL) -> float:
    fa = f(a)
    while b - a > tol:
        mid = 0.5 * (a + b)
        fm = f(mid)
        if (fm > 0) == (fa > 0):
            a, fa = mid, fm
        else:
            b = mid
    return 0.5 * (a + b)


def oracle_replacement_apriori_concurrence(rho0, nu: float) -> OracleCurve:
    def f(t):
        return np.array([concurrence_mixed(r) for r in replacement_apriori_state(rho0, nu, t)])

    return OracleCurve("replacement_apriori", dict(nu=nu), f)


def oracle_sec4_mean_concurrence(nu: float, c0: float, t) -> np.ndarray:
    """1 - (1 - C0) e^{-nu t}."""
    if not nu > 0:
        raise ValueError("nu must be positive")
    return 1 - (1 - c0) * np.exp(-nu * np.asarray(t, dtype=float))


def _same_ray(a: np.ndarray, b: np.ndarray, tol: float = 1e-10) -> bool:
    return abs(abs(np.vdot(a, b)) - 1) < tol


def oracle_esd_times(preset_id: str, params: dict, rho0) -> float | None:
    """Closed-form a priori death time, or None when concurrence never vanishes.

    Supported: the local and non-local detection presets of the two independent baths with omega0 = 0 and
    initial state (|10> + i|01>)/sqrt(2); the replacement-channel preset with
    any X-state initial condition (bisection on the analytic a priori state).
    """
    from .presets import esd_initial_state

    arr = np.asarray(rho0, dtype=complex)
    rho = np.outer(arr, arr.conj()) if arr.shape == (4,) else check_density(arr)
    if concurrence_mixed(rho) <= 1e-12:
        return None
    if preset_id in ("local_diffusive", "local_jump", "nonlocal_diffusive"):
        if params.get("omega0", 0.0) != 0.0:
            raise UnsupportedClassification("closed-form death time needs omega0 = 0")
        w, v = np.linalg.eigh(rho)
        if w[-1] < 1 - 1e-10 or not _same_ray(v[:, -1], esd_initial_state()):
            raise UnsupportedClassification("closed-form death time is known for (|10> + i|01>)/sqrt(2) only")
        return esd_time_local(params.get("gamma", 1.0))
    if preset_id == "swap_witness":
        if not is_x_state(rho):
            raise UnsupportedClassification("closed-form death time needs an X state")
        nu = params.get("nu", 1.0)
        f = lambda t: _margin(replacement_apriori_state(rho, nu, t)[0])
        hi = 1.0 / nu
        while f(hi) > 0:
            hi *= 2
            if hi > 1e6 / nu:
                return None
        return _bisect(f, 0.0, hi)
    raise UnsupportedClassification(f"no closed-form death time for preset {preset_id!r}")


def apriori_esd_time(m: Model, rho0, T: float, dt: float = 1e-3, path=None) -> float | None:
    """First zero of the a priori concurrence on [0, T].

    Integrates the master equation, locates the first sign change of the
    concurrence margin on the grid and refines it by bisection, evaluating
    intermediate times with one RK4 substep from the left grid point.
    """
    path = path if path is not None else evolve_master(m, rho0, T, dt)
    margins = np.array([_margin(r) for r in path.states])
    if margins[0] <= 0:
        return None
    hits = np.nonzero(margins <= 0)[0]
    if not hits.size:
        return None
    n = int(hits[0]) - 1
    t0 = path.times[n]
    L = liouvillian_superoperator(m, t0)
    x0 = path.states[n].reshape(16)
    f = lambda s: _margin((_rk4_matrix(L, s) @ x0).reshape(4, 4))
    return t0 + _bisect(f, 0.0, path.times[n + 1] - t0)
