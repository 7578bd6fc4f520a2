"""Integrators for the linear SSE/SME, the normalized filter and the master equation.

Trajectories are simulated in batches: every array carries a leading
trajectory axis and the per-step work is a handful of batched 4x4 products.
Each trajectory draws its randomness from its own Philox streams, derived from
the root seed and the trajectory index, so results do not depend on how the
ensemble is split into batches.

Two measures are supported:

``"Q"``  reference measure. Wiener noise is standard, counting channel k is a
         Poisson process of rate lambda_k, and the state is the non-normalized
         sigma(t) with weight p_t = Tr sigma(t).
``"P"``  physical measure. The state is the normalized rho(t), diffusive
         outputs are dW = dW_hat + m dt and counts are drawn by thinning
         against 1.5 times the intensity at the start of the step.

The default ``"exponential"`` scheme advances the continuous part with
exp((K + sum lambda/2 - 1/2 sum R_j^2) dt + sum R_j dW_j), which agrees with
Euler-Maruyama to weak order one but keeps local unitary dynamics exactly
unitary. ``"euler"`` is the plain Euler-Maruyama update.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import _kernels
from .entanglement import chi_batch, concurrence_mixed_batch
from .model import DerivedOperators, Model, liouvillian_superoperator
from .qcore import TRACE_TOL, as_matrix, check_density

log = logging.getLogger(__name__)

SCHEMES = ("exponential", "euler")
MODES = ("Q", "P")
OBSERVABLES = ("state", "concurrence", "weight", "counts")
WEIGHT_FLOOR = 1e-300
MAX_RATE_DT = 0.1
THINNING_FACTOR = 1.5
NOISE_BLOCK = 512
DEFAULT_BATCH = 1000
MASTER_TRACE_TOL = 1e-8


class NumericalError(RuntimeError):
    """The integration cannot be trusted with the requested parameters."""


def _dagger(a: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(a, -1, -2))


# -- matrix exponential action ---------------------------------------------------


def expm_apply(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """exp(X) @ Y for a stack of 4x4 generators ``X`` (or one shared generator).

    ``Y`` is ``(n, 4)`` (vectors) or ``(n, 4, 4)``. Uses a truncated Taylor
    series with scaling, sized from the largest infinity norm in the batch so
    that the truncation error stays below double-precision round-off.
    """
    vec = Y.ndim == 2
    Z = Y[..., None] if vec else Y
    norm = float(np.max(np.abs(X).sum(axis=-1), initial=0.0))
    if norm == 0.0:
        return Y.copy()
    s = max(1, math.ceil(norm / 0.5))
    theta = norm / s
    m, term_bound = 1, theta
    while term_bound > 1e-17 and m < 30:
        m += 1
        term_bound *= theta / m
    Xs = X / s
    for _ in range(s):
        out = Z
        term = Z
        for k in range(1, m + 1):
            term = (Xs @ term) / k
            out = out + term
        Z = out
    return Z[..., 0] if vec else Z


# -- per-segment operator cache --------------------------------------------------------


@dataclass
class _Segment:
    ops: DerivedOperators
    dt: float
    R: np.ndarray            # (d, 4, 4)
    A: np.ndarray            # K + sum(lambda)/2, the Euler drift
    D: np.ndarray            # exponent drift, A - 1/2 sum R_j^2
    const_prop: np.ndarray | None
    J_scaled: list            # per channel: J_k / sqrt(lambda_k) (single Kraus) or None
    effects: np.ndarray      # (d', 4, 4)

    @classmethod
    def build(cls, ops: DerivedOperators, dt: float) -> "_Segment":
        d = ops.d
        R = np.array(ops.diffusive, dtype=complex).reshape(d, 4, 4)
        A = ops.K + 0.5 * ops.lambdas.sum() * np.eye(4)
        D = A - 0.5 * sum((r @ r for r in R), np.zeros((4, 4), dtype=complex))
        const_prop = None
        if d == 0:
            const_prop = expm_apply(D[None] * dt, np.eye(4, dtype=complex)[None])[0]
        J_scaled = [ch.kraus[0] / math.sqrt(ch.rate) if ch.single else None for ch in ops.channels]
        effects = np.array([ch.effect() for ch in ops.channels], dtype=complex).reshape(-1, 4, 4)
        return cls(ops, dt, R, A, D, const_prop, J_scaled, effects)


class _Schedule:
    """Maps steps to cached segments for piecewise-constant models."""

    def __init__(self, model: Model, grid: np.ndarray):
        self.model = model
        dt = grid[1] - grid[0] if len(grid) > 1 else 0.0
        bps = np.asarray(model.breakpoints)
        self.seg_of_step = np.searchsorted(bps, grid[:-1] + 1e-12 * dt, side="right") - 1
        self.segments = {}
        for idx in np.unique(self.seg_of_step):
            self.segments[int(idx)] = _Segment.build(model.detection_operators(float(bps[idx])), dt)
        first = self.segments[int(self.seg_of_step[0])] if len(grid) > 1 else _Segment.build(
            model.detection_operators(0.0), 1.0)
        self.d = first.ops.d
        self.d_prime = first.ops.d_prime
        self.lambdas = first.ops.lambdas
        self.single_kraus = all(s.ops.single_kraus for s in self.segments.values()) if self.segments else True
        self.labels = [ch.label or str(k) for k, ch in enumerate(first.ops.channels)]

    def __getitem__(self, step: int) -> _Segment:
        return self.segments[int(self.seg_of_step[step])]


# -- random streams ------------------------------------------------------------------------


def trajectory_streams(seed: int, index: int) -> tuple[np.random.Generator, np.random.Generator]:
    """Independent (diffusion, jump) generators for trajectory ``index`` of a run."""
    mk = lambda k: np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(index, k))))
    return mk(0), mk(1)


class _Streams:
    def __init__(self, seed: int, ids: Sequence[int]):
        self.gens = [trajectory_streams(seed, int(i)) for i in ids]

    def normals(self, n_steps: int, d: int) -> np.ndarray:
        return np.stack([g[0].standard_normal((n_steps, d)) for g in self.gens], axis=1)

    def uniforms(self, n_steps: int, d_prime: int) -> np.ndarray:
        return np.stack([g[1].random((n_steps, d_prime, 2)) for g in self.gens], axis=1)

    def poisson_events(self, lambdas: np.ndarray, T: float) -> list[list[tuple[float, int]]]:
        """Event times on (0, T] of independent Poisson clocks, per trajectory."""
        out = []
        for _, gj in self.gens:
            events = []
            for k, lam in enumerate(lambdas):
                n = gj.poisson(lam * T)
                events.extend((float(t), k) for t in gj.uniform(0.0, T, n))
            events.sort()
            out.append(events)
        return out


# -- records ---------------------------------------------------------------------------------


@dataclass(frozen=True)
class CountEvent:
    time: float
    channel: int
    mark: str


@dataclass
class TrajectoryRecord:
    """One monitored realization.

    ``states`` holds phi(t) (shape ``(N+1, 4)``) or sigma(t)/rho(t) (shape
    ``(N+1, 4, 4)``) at each grid point; in Q-mode they are not normalized and
    ``weight`` is p_t. ``wiener_increments[n]`` are the observed diffusive
    output increments over step n.
    """

    grid: np.ndarray
    states: np.ndarray
    weight: np.ndarray
    wiener_increments: np.ndarray
    counts: list[CountEvent]
    measure_tag: str
    channel_labels: tuple[str, ...] = ()

    @property
    def pure(self) -> bool:
        return self.states.ndim == 2

    def cumulative_counts(self) -> np.ndarray:
        """Counts per channel up to each grid time, shape ``(N+1, d')``."""
        out = np.zeros((len(self.grid), len(self.channel_labels)), dtype=int)
        for ev in self.counts:
            idx = np.searchsorted(self.grid, ev.time - 1e-12, side="left")
            out[idx:, ev.channel] += 1
        return out

    def normalized_states(self) -> np.ndarray:
        """rho(t) or psi(t); NaN where the weight vanished."""
        with np.errstate(invalid="ignore", divide="ignore"):
            if self.pure:
                nrm = np.linalg.norm(self.states, axis=1)
                return self.states / nrm[:, None]
            tr = np.trace(self.states, axis1=1, axis2=2).real
            return self.states / tr[:, None, None]


@dataclass
class EnsembleEstimate:
    times: np.ndarray
    mean: np.ndarray
    std_error: np.ndarray
    n_traj: int
    mode: str
    observable: str = ""


@dataclass
class MasterPath:
    times: np.ndarray
    states: np.ndarray
    min_eigenvalue: float = 0.0


# -- single steps ----------------------------------------------------------------------------


def _continuous_generator(seg: _Segment, dW: np.ndarray, scheme: str) -> np.ndarray:
    """Per-trajectory generator X with the continuous update being exp(X) or 1 + X."""
    base = seg.D if scheme == "exponential" else seg.A
    X = np.broadcast_to(base * seg.dt, (dW.shape[0], 4, 4))
    if seg.R.shape[0]:
        X = X + np.einsum("nj,jab->nab", dW, seg.R)
    return X


def _advance_pure(phi: np.ndarray, seg: _Segment, dW: np.ndarray, scheme: str) -> np.ndarray:
    if scheme == "exponential":
        if seg.const_prop is not None:
            return phi @ seg.const_prop.T
        out = np.array(phi, dtype=complex, order="C")
        _kernels.pure_step(out, seg.D, seg.R, np.ascontiguousarray(dW, dtype=float), seg.dt, False,
                           np.empty_like(dW, dtype=float))
        return out
    X = _continuous_generator(seg, dW, scheme)
    return phi + np.einsum("nab,nb->na", X, phi)


def _advance_mixed(sig: np.ndarray, seg: _Segment, dW: np.ndarray, scheme: str) -> np.ndarray:
    if scheme == "exponential":
        if seg.const_prop is not None:
            M = seg.const_prop
            return M @ sig @ M.conj().T
        out = np.array(sig, dtype=complex, order="C")
        _kernels.mixed_step(out, seg.D, seg.R, np.ascontiguousarray(dW, dtype=float), seg.dt, False,
                            np.empty_like(dW, dtype=float))
        return out
    dt = seg.dt
    A = seg.A
    out = sig + (A @ sig + sig @ A.conj().T) * dt
    for j, r in enumerate(seg.R):
        rs = r @ sig
        out = out + (r @ sig @ r.conj().T) * dt + (rs + _dagger(rs)) * dW[:, j, None, None]
    return out


def _jump_pure(phi: np.ndarray, seg: _Segment, k: int) -> np.ndarray:
    return phi @ seg.J_scaled[k].T


def _jump_mixed(sig: np.ndarray, seg: _Segment, k: int) -> np.ndarray:
    ch = seg.ops.channels[k]
    return ch.apply(sig) / ch.rate


def _check_scheme(scheme: str):
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")


def step_linear_sse(phi, ops: DerivedOperators, dt: float, noise=(), jumps=(), scheme: str = "exponential"):
    """One step of the linear SSE under the reference measure.

    ``noise`` are the d Wiener increments (variance ``dt``), ``jumps`` the d'
    event counts of the step. With ``scheme="euler"`` this is

        phi + K phi dt + sum_j R_j phi dW_j + sum_k [(J_k/sqrt(lambda_k) - 1) phi dN_k + lambda_k/2 phi dt]

    with the jump acting on the pre-step value. The exponential scheme applies
    the continuous propagator first and then each jump.
    """
    _check_scheme(scheme)
    phi = np.asarray(phi, dtype=complex)
    single = phi.ndim == 1
    phis = phi[None] if single else phi
    seg = _Segment.build(ops, dt)
    dW = np.asarray(noise, dtype=float).reshape(phis.shape[0] if not single else 1, ops.d)
    dN = np.asarray(jumps, dtype=float).reshape(phis.shape[0] if not single else 1, ops.d_prime)
    if scheme == "euler":
        out = _advance_pure(phis, seg, dW, scheme)
        for k in range(ops.d_prime):
            jp = _jump_pure(phis, seg, k) - phis
            out = out + jp * dN[:, k, None]
    else:
        out = _advance_pure(phis, seg, dW, scheme)
        for k in range(ops.d_prime):
            for n in range(out.shape[0]):
                for _ in range(int(dN[n, k])):
                    out[n] = _jump_pure(out[n:n + 1], seg, k)[0]
    return out[0] if single else out


def step_linear_sme(sigma, ops: DerivedOperators, dt: float, noise=(), jumps=(), scheme: str = "exponential"):
    """One step of the linear SME

        d sigma = L[sigma] dt + sum_j (R_j sigma + sigma R_j^dag) dW_j + sum_k (J_k(sigma)/lambda_k - sigma)(dN_k - lambda_k dt)

    where J_k is the (possibly multi-Kraus) jump map of channel k.
    """
    _check_scheme(scheme)
    sig = np.asarray(sigma, dtype=complex)
    single = sig.ndim == 2
    sigs = sig[None] if single else sig
    seg = _Segment.build(ops, dt)
    n = sigs.shape[0]
    dW = np.asarray(noise, dtype=float).reshape(n, ops.d)
    dN = np.asarray(jumps, dtype=float).reshape(n, ops.d_prime)
    out = _advance_mixed(sigs, seg, dW, scheme)
    for k in range(ops.d_prime):
        if scheme == "euler":
            out = out + (_jump_mixed(sigs, seg, k) - sigs) * dN[:, k, None, None]
        else:
            for i in range(n):
                for _ in range(int(dN[i, k])):
                    out[i] = _jump_mixed(out[i:i + 1], seg, k)[0]
    return out[0] if single else out


# -- batched propagation ------------------------------------------------------------------


def make_grid(T: float, dt: float) -> np.ndarray:
    if not T > 0:
        raise ValueError("time horizon T must be positive")
    if not dt > 0:
        raise ValueError("time step dt must be positive")
    n = max(1, int(round(T / dt)))
    return np.linspace(0.0, T, n + 1)


def _prepare_initial(initial, pure_ok: bool) -> tuple[np.ndarray, bool]:
    arr = np.asarray(initial, dtype=complex)
    if arr.shape == (4,):
        nrm = np.vdot(arr, arr).real
        if abs(nrm - 1) > 1e-10:
            raise ValueError("initial state vector must be normalized")
        if pure_ok:
            return arr, True
        return np.outer(arr, arr.conj()), False
    rho = check_density(as_matrix(arr, 4))
    return rho, False


@dataclass
class _BatchResult:
    record_steps: np.ndarray
    states: list = field(default_factory=list)
    weights: list = field(default_factory=list)
    counts: list = field(default_factory=list)
    wiener: np.ndarray | None = None
    events: list | None = None
    bound_violations: int = 0


def _intensities(state: np.ndarray, seg: _Segment, pure: bool) -> np.ndarray:
    if seg.effects.shape[0] == 0:
        return np.zeros((state.shape[0], 0))
    state = np.ascontiguousarray(state)
    if pure:
        return _kernels.intensities_pure(state, seg.effects)
    return _kernels.intensities_mixed(state, seg.effects)


def _normalize(state: np.ndarray, pure: bool) -> tuple[np.ndarray, np.ndarray]:
    if pure:
        w = np.einsum("na,na->n", state.conj(), state).real
        return state / np.sqrt(np.where(w > 0, w, 1.0))[:, None], w
    w = np.trace(state, axis1=1, axis2=2).real
    return state / np.where(w > 0, w, 1.0)[:, None, None], w


def _propagate(model: Model, initial, grid: np.ndarray, ids: Sequence[int], seed: int, mode: str,
               scheme: str, record_steps: np.ndarray, keep_path: bool = False) -> tuple[_BatchResult, bool]:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    _check_scheme(scheme)
    sched = _Schedule(model, grid)
    dt = grid[1] - grid[0]
    T = grid[-1]
    n_steps = len(grid) - 1
    lam = sched.lambdas
    if lam.size and np.max(lam) * dt >= MAX_RATE_DT:
        raise ValueError(f"lambda_k dt = {np.max(lam) * dt:.3g} must stay below {MAX_RATE_DT}; reduce dt")
    state0, pure = _prepare_initial(initial, sched.single_kraus)
    nb = len(ids)
    state = np.repeat(state0[None], nb, axis=0)
    d, dp = sched.d, sched.d_prime
    weight = np.ones(nb)
    alive = np.ones(nb, dtype=bool)
    counts = np.zeros((nb, dp), dtype=int)
    streams = _Streams(seed, ids)

    res = _BatchResult(record_steps=record_steps)
    if keep_path:
        res.wiener = np.zeros((n_steps, nb, d))
        res.events = [[] for _ in range(nb)]
    q_events = None
    if mode == "Q" and dp:
        q_events = {}
        for i, evs in enumerate(streams.poisson_events(lam, T)):
            for t_ev, k in evs:
                step = min(int(np.searchsorted(grid, t_ev, side="left")) - 1, n_steps - 1)
                q_events.setdefault(max(step, 0), []).append((t_ev, i, k))

    rec_set = set(int(s) for s in record_steps)

    def record(step: int):
        if step in rec_set:
            res.states.append(state.copy())
            res.weights.append(weight.copy())
            res.counts.append(counts.copy())

    record(0)
    normals = uniforms = None
    for n in range(n_steps):
        b = n % NOISE_BLOCK
        if b == 0:
            size = min(NOISE_BLOCK, n_steps - n)
            normals = streams.normals(size, d) * math.sqrt(dt) if d else None
            uniforms = streams.uniforms(size, dp) if (mode == "P" and dp) else None
        seg = sched[n]
        mu_left = _intensities(state, seg, pure) if (mode == "P" and dp) else None
        prev = state.copy() if scheme == "euler" else None
        if scheme == "exponential" and seg.const_prop is None:
            # compiled path: output increments and normalization happen in the kernel
            dW = np.empty((nb, d))
            kernel = _kernels.pure_step if pure else _kernels.mixed_step
            kernel(state, seg.D, seg.R, np.ascontiguousarray(normals[b]), dt, mode == "P", dW)
        else:
            dW = normals[b] if d else np.zeros((nb, 0))
            if mode == "P" and d:
                if pure:
                    m = 2 * np.einsum("na,jab,nb->nj", state.conj(), seg.R, state).real
                else:
                    m = 2 * np.einsum("jab,nba->nj", seg.R, state).real
                dW = dW + m * dt
            state = (_advance_pure if pure else _advance_mixed)(state, seg, dW, scheme)
            if mode == "P":
                state, _ = _normalize(state, pure)
        if keep_path:
            res.wiener[n] = dW

        jump = _jump_pure if pure else _jump_mixed
        if mode == "Q" and q_events and n in q_events:
            if scheme == "euler":
                dN = np.zeros((nb, dp))
                for t_ev, i, k in q_events[n]:
                    dN[i, k] += 1
                    counts[i, k] += 1
                    if keep_path:
                        res.events[i].append(CountEvent(t_ev, k, sched.labels[k]))
                for k in range(dp):
                    rows = np.nonzero(dN[:, k])[0]
                    if rows.size:
                        shape = (-1,) + (1,) * (state.ndim - 1)
                        state[rows] += (jump(prev[rows], seg, k) - prev[rows]) * dN[rows, k].reshape(shape)
            else:
                for t_ev, i, k in q_events[n]:
                    state[i:i + 1] = jump(state[i:i + 1], seg, k)
                    counts[i, k] += 1
                    if keep_path:
                        res.events[i].append(CountEvent(t_ev, k, sched.labels[k]))
        elif mode == "P" and dp:
            u = uniforms[b]
            bound = THINNING_FACTOR * mu_left
            with np.errstate(over="ignore"):
                propose = u[:, :, 0] < -np.expm1(-bound * dt)
            if propose.any():
                for k in range(dp):
                    rows = np.nonzero(propose[:, k] & alive)[0]
                    if not rows.size:
                        continue
                    mu_now = _intensities(state[rows], seg, pure)[:, k]
                    res.bound_violations += int(np.sum(mu_now > bound[rows, k]))
                    acc = (u[rows, k, 1] * bound[rows, k] < mu_now) & (mu_now > 0)
                    rows = rows[acc]
                    if not rows.size:
                        continue
                    counts[rows, k] += 1
                    if keep_path:
                        for i in rows:
                            res.events[i].append(CountEvent(float(grid[n + 1]), k, sched.labels[k]))
                    # Euler: the jump acts on the pre-step state and replaces the step
                    source = prev if scheme == "euler" else state
                    state[rows] = _normalize(jump(source[rows], seg, k), pure)[0]

        if mode == "Q":
            _, w = _normalize(state, pure)
            dead = alive & (w < WEIGHT_FLOOR)
            if dead.any():
                state[dead] = 0.0
                alive &= ~dead
            weight = np.where(alive, w, 0.0)
        record(n + 1)

    if res.bound_violations:
        log.warning("thinning bound exceeded %d times; consider a smaller dt", res.bound_violations)
    return res, pure


def _record_indices(n_steps: int, record_every: int | None) -> np.ndarray:
    if record_every is None:
        record_every = max(1, n_steps // 200)
    idx = np.arange(0, n_steps + 1, record_every)
    if idx[-1] != n_steps:
        idx = np.append(idx, n_steps)
    return idx


def simulate(model: Model, initial, T: float, dt: float, seed: int = 0, mode: str = "P",
             traj_index: int = 0, scheme: str = "exponential") -> TrajectoryRecord:
    """Simulate trajectory ``traj_index`` of the run seeded by ``seed`` and keep its full path."""
    grid = make_grid(T, dt)
    steps = np.arange(len(grid))
    res, pure = _propagate(model, initial, grid, [traj_index], seed, mode, scheme, steps, keep_path=True)
    states = np.array([s[0] for s in res.states])
    weights = np.array([w[0] for w in res.weights])
    labels = tuple(_Schedule(model, grid).labels)
    return TrajectoryRecord(
        grid=grid,
        states=states,
        weight=weights,
        wiener_increments=res.wiener[:, 0, :],
        counts=res.events[0],
        measure_tag=mode,
        channel_labels=labels,
    )


def simulate_physical(model: Model, initial, T: float, dt: float, seed: int = 0, **kw) -> TrajectoryRecord:
    """Normalized a posteriori path under the physical measure."""
    return simulate(model, initial, T, dt, seed, mode="P", **kw)


def simulate_reference(model: Model, initial, T: float, dt: float, seed: int = 0, **kw) -> TrajectoryRecord:
    """Non-normalized path of the linear SSE/SME under the reference measure."""
    return simulate(model, initial, T, dt, seed, mode="Q", **kw)


# -- ensembles -------------------------------------------------------------------------------


class _Accumulator:
    """Running mean and sum of squared deviations (Chan et al. pairwise merge)."""

    def __init__(self):
        self.n = 0
        self.mean = None
        self.m2 = None

    def add(self, values: np.ndarray):
        nb = values.shape[0]
        bmean = values.mean(axis=0)
        bm2 = (np.abs(values - bmean) ** 2).sum(axis=0)
        if self.n == 0:
            self.n, self.mean, self.m2 = nb, bmean, bm2
            return
        n = self.n + nb
        delta = bmean - self.mean
        self.mean = self.mean + delta * nb / n
        self.m2 = self.m2 + bm2 + np.abs(delta) ** 2 * self.n * nb / n
        self.n = n

    def std_error(self) -> np.ndarray:
        if self.n < 2:
            return np.full(np.shape(self.m2), np.nan)
        return np.sqrt(self.m2 / (self.n - 1) / self.n)


def _observable_values(name: str, states: np.ndarray, weights: np.ndarray, counts: np.ndarray,
                       pure: bool, mode: str) -> np.ndarray:
    if name == "weight":
        return weights.astype(float)
    if name == "counts":
        return counts * weights[:, None] if mode == "Q" else counts.astype(float)
    if name == "state":
        return np.einsum("na,nb->nab", states, states.conj()) if pure else states
    if name == "concurrence":
        if pure:
            c = np.abs(chi_batch(states))
            if mode == "P":
                return c
            return c  # |chi(phi)| = p_t C(psi)
        with np.errstate(invalid="ignore", divide="ignore"):
            tr = np.trace(states, axis1=1, axis2=2).real
            rho = states / np.where(tr > 0, tr, 1.0)[:, None, None]
        c = concurrence_mixed_batch(rho)
        return np.where(tr > 0, c * tr, 0.0) if mode == "Q" else c
    raise ValueError(f"unknown observable {name!r}; expected one of {OBSERVABLES}")


def ensemble_run(model: Model, initial, T: float, dt: float, n_traj: int, seed: int = 0,
                 observable: str | Iterable[str] = "state", mode: str = "P", scheme: str = "exponential",
                 record_every: int | None = None, batch_size: int = DEFAULT_BATCH):
    """Monte Carlo estimate of E_P[f(rho(t))] at the recorded times.

    In Q-mode the estimator is the weighted average of p_t f(sigma/p_t), in
    P-mode a plain average. Returns one :class:`EnsembleEstimate` for a single
    observable name or a dict of them for a list.
    """
    if n_traj < 1:
        raise ValueError("n_traj must be at least 1")
    names = [observable] if isinstance(observable, str) else list(observable)
    for nm in names:
        if nm not in OBSERVABLES:
            raise ValueError(f"unknown observable {nm!r}; expected one of {OBSERVABLES}")
    grid = make_grid(T, dt)
    rec = _record_indices(len(grid) - 1, record_every)
    accs = {nm: [_Accumulator() for _ in rec] for nm in names}
    any_weight = False
    for start in range(0, n_traj, batch_size):
        ids = range(start, min(n_traj, start + batch_size))
        res, pure = _propagate(model, initial, grid, ids, seed, mode, scheme, rec)
        if mode == "Q" and np.any(res.weights[-1] > 0):
            any_weight = True
        for r, (st, w, c) in enumerate(zip(res.states, res.weights, res.counts)):
            for nm in names:
                accs[nm][r].add(_observable_values(nm, st, w, c, pure, mode))
    if mode == "Q" and not any_weight:
        raise NumericalError("all trajectory weights underflowed; use mode='P'")
    out = {}
    for nm in names:
        mean = np.array([a.mean for a in accs[nm]])
        if nm != "state":
            mean = mean.real if np.iscomplexobj(mean) else mean
        se = np.array([a.std_error() for a in accs[nm]])
        out[nm] = EnsembleEstimate(times=grid[rec], mean=mean, std_error=se, n_traj=n_traj, mode=mode,
                                   observable=nm)
    return out[names[0]] if isinstance(observable, str) else out


# -- master equation ----------------------------------------------------------------------


def _rk4_matrix(L: np.ndarray, h: float) -> np.ndarray:
    """Classical RK4 step for the linear ODE x' = L x."""
    hL = h * L
    out = np.eye(L.shape[0], dtype=complex)
    term = np.eye(L.shape[0], dtype=complex)
    for k in range(1, 5):
        term = term @ hL / k
        out = out + term
    return out


def master_step(model: Model, eta, t: float, h: float) -> np.ndarray:
    """One RK4 step of length ``h`` from ``eta`` at time ``t``."""
    L = liouvillian_superoperator(model, t)
    return (_rk4_matrix(L, h) @ np.asarray(eta, dtype=complex).reshape(16)).reshape(4, 4)


def evolve_master(model: Model, rho0, T: float, dt: float) -> MasterPath:
    """Integrate d eta/dt = L(t)[eta] with classical RK4 on the grid 0, dt, ..., T."""
    rho0 = check_density(rho0)
    grid = make_grid(T, dt)
    h = grid[1] - grid[0]
    bps = np.asarray(model.breakpoints)
    seg_of_step = np.searchsorted(bps, grid[:-1] + 1e-12 * h, side="right") - 1
    props = {int(s): _rk4_matrix(liouvillian_superoperator(model, float(bps[s])), h) for s in np.unique(seg_of_step)}
    states = np.empty((len(grid), 4, 4), dtype=complex)
    states[0] = rho0
    x = rho0.reshape(16)
    for n in range(len(grid) - 1):
        x = props[int(seg_of_step[n])] @ x
        states[n + 1] = x.reshape(4, 4)
    drift = np.max(np.abs(np.trace(states, axis1=1, axis2=2) - 1))
    if drift > MASTER_TRACE_TOL:
        raise NumericalError(f"trace drifted by {drift:.2e}; reduce dt")
    herm = (states + _dagger(states)) / 2
    min_eig = float(np.linalg.eigvalsh(herm).min())
    if min_eig < -1e-10:
        log.warning("master equation path lost positivity (min eigenvalue %.2e); reduce dt", min_eig)
    return MasterPath(times=grid, states=states, min_eigenvalue=min_eig)


def trace_check(rho) -> bool:
    return abs(np.trace(rho) - 1) <= TRACE_TOL
