"""Monitored two-qubit models and the operators derived from them.

A :class:`MonitoredModel` holds the system data (H, L_z, S), the coherent
field argument v(t), the detection unitary u(t) and the split into ``d``
diffusive and ``d'`` counting channels. Evaluating it at a time gives a
:class:`DerivedOperators` snapshot: the effective Hamiltonian H_0(t), the
detection operators R_j(t) and the counting channels with their reference
rates. That snapshot is what the integrators consume.

Models whose counting channels are not single operators (replacement jumps)
are written directly as a :class:`ChannelModel`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .qcore import (
    HERMITIAN_TOL,
    I2,
    I4,
    PAULI,
    as_matrix,
    is_hermitian,
    is_unitary,
    partial_trace,
    tensor,
)

LOCALITY_TOL = 1e-10


class ModelError(ValueError):
    """Invalid model data."""


class NonLocalError(ValueError):
    """An operation needs local detection operators and got a non-local one."""


class UnsupportedClassification(NotImplementedError):
    pass


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=complex)
    arr.setflags(write=False)
    return arr


def _dagger(a: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(a, -1, -2))


# -- Pauli decomposition and locality ---------------------------------------


@dataclass(frozen=True)
class PauliDecomposition:
    """A = sum_i h[i] sigma_i + r."""

    h: np.ndarray
    r: complex

    def reconstruct(self) -> np.ndarray:
        return sum(hi * s for hi, s in zip(self.h, PAULI)) + self.r * I2


def pauli_decompose(a) -> PauliDecomposition:
    m = as_matrix(a, 2)
    h = np.array([np.trace(s @ m) / 2 for s in PAULI], dtype=complex)
    return PauliDecomposition(h=h, r=complex(np.trace(m) / 2))


def local_factor(a, tol: float = LOCALITY_TOL) -> int | None:
    """Which qubit a 4x4 operator acts on: 1, 2, 0 for a multiple of the identity, None if neither."""
    m = as_matrix(a, 4)
    on1 = np.linalg.norm(m - tensor(partial_trace(m, 2) / 2, I2)) <= tol
    on2 = np.linalg.norm(m - tensor(I2, partial_trace(m, 1) / 2)) <= tol
    if on1 and on2:
        return 0
    if on1:
        return 1
    if on2:
        return 2
    return None


def local_part(a, factor: int) -> np.ndarray:
    """The 2x2 operator A0 with a = A0 x 1 (factor 1) or 1 x A0 (factor 2)."""
    m = as_matrix(a, 4)
    return partial_trace(m, 2 if factor in (0, 1) else 1) / 2


def is_sum_of_locals(a, tol: float = LOCALITY_TOL) -> bool:
    """Project onto span{B x 1} + span{1 x B} and test the residual."""
    m = as_matrix(a, 4)
    proj = (
        tensor(partial_trace(m, 2) / 2, I2)
        + tensor(I2, partial_trace(m, 1) / 2)
        - np.trace(m) / 4 * I4
    )
    return bool(np.linalg.norm(m - proj) <= tol)


# -- channels and snapshots ---------------------------------------------------


@dataclass(frozen=True)
class JumpChannel:
    """A counting channel: jump map sigma -> sum_i K_i sigma K_i^dag, reference rate ``rate``."""

    kraus: tuple[np.ndarray, ...]
    rate: float
    label: str = ""

    def __post_init__(self):
        ks = tuple(_frozen(as_matrix(k, 4)) for k in self.kraus)
        if not ks:
            raise ModelError("a jump channel needs at least one Kraus operator")
        if not self.rate > 0:
            raise ModelError(f"reference rate must be positive, got {self.rate}")
        object.__setattr__(self, "kraus", ks)
        object.__setattr__(self, "rate", float(self.rate))

    @property
    def single(self) -> bool:
        return len(self.kraus) == 1

    def apply(self, sigma: np.ndarray) -> np.ndarray:
        """Jump map on a matrix or a stack ``(..., 4, 4)``."""
        return sum(k @ sigma @ _dagger(k) for k in self.kraus)

    def effect(self) -> np.ndarray:
        """sum_i K_i^dag K_i, so that the intensity is Tr(effect rho)."""
        return sum(_dagger(k) @ k for k in self.kraus)

    def intensity(self, rho: np.ndarray) -> np.ndarray:
        return np.real(np.einsum("ij,...ji->...", self.effect(), rho))


@dataclass(frozen=True)
class DerivedOperators:
    """Operators driving the SSE/SME at one time.

    ``diffusive`` are R_1..R_d, ``channels`` the counting channels
    (for a :class:`MonitoredModel` each holds the single operator
    J_k = R_{d+k} with reference rate lambda_k).
    """

    H0: np.ndarray
    diffusive: tuple[np.ndarray, ...] = ()
    channels: tuple[JumpChannel, ...] = ()

    @property
    def d(self) -> int:
        return len(self.diffusive)

    @property
    def d_prime(self) -> int:
        return len(self.channels)

    @property
    def single_kraus(self) -> bool:
        return all(ch.single for ch in self.channels)

    @property
    def J(self) -> tuple[np.ndarray, ...]:
        if not self.single_kraus:
            raise ValueError("counting channels are not single jump operators")
        return tuple(ch.kraus[0] for ch in self.channels)

    @property
    def R(self) -> tuple[np.ndarray, ...]:
        """All detection operators R_1..R_{d+d'} (J_k = R_{d+k})."""
        return self.diffusive + self.J

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([ch.rate for ch in self.channels])

    @property
    def K(self) -> np.ndarray:
        k = -1j * self.H0
        for r in self.diffusive:
            k = k - 0.5 * _dagger(r) @ r
        for ch in self.channels:
            k = k - 0.5 * ch.effect()
        return k

    def liouvillian(self, tau: np.ndarray) -> np.ndarray:
        """-i[H0, tau] + sum_j D[R_j] tau + sum_k (J_k(tau) - 1/2 {E_k, tau})."""
        out = -1j * (self.H0 @ tau - tau @ self.H0)
        for r in self.diffusive:
            rd = _dagger(r)
            rr = rd @ r
            out = out + r @ tau @ rd - 0.5 * (rr @ tau + tau @ rr)
        for ch in self.channels:
            e = ch.effect()
            out = out + ch.apply(tau) - 0.5 * (e @ tau + tau @ e)
        return out


# -- piecewise-constant tables --------------------------------------------------


@dataclass(frozen=True)
class PiecewiseConstant:
    """Value table with breakpoints t_0 = 0 < t_1 < ...; right-continuous."""

    times: tuple[float, ...]
    values: tuple[np.ndarray, ...]

    @classmethod
    def build(cls, spec, shape: tuple[int, ...]) -> "PiecewiseConstant":
        """From a constant array or a list of ``(t, value)`` pairs."""
        if spec is None:
            raise ModelError("missing table")
        if isinstance(spec, PiecewiseConstant):
            return spec
        if isinstance(spec, (list, tuple)) and spec and isinstance(spec[0], tuple):
            pairs = [(float(t), np.asarray(v, dtype=complex)) for t, v in spec]
        else:
            pairs = [(0.0, np.asarray(spec, dtype=complex))]
        times = tuple(t for t, _ in pairs)
        if times[0] != 0.0 or any(b <= a for a, b in zip(times, times[1:])):
            raise ModelError("breakpoints must start at 0 and increase strictly")
        vals = []
        for _, v in pairs:
            if v.shape != shape:
                raise ModelError(f"table entry has shape {v.shape}, expected {shape}")
            vals.append(_frozen(v))
        return cls(times=times, values=tuple(vals))

    def at(self, t: float) -> np.ndarray:
        idx = int(np.searchsorted(self.times, t, side="right")) - 1
        return self.values[max(idx, 0)]


# -- models -------------------------------------------------------------------------


@dataclass(frozen=True)
class MonitoredModel:
    """System operators, field argument, detection unitary and channel split.

    ``S`` is the block matrix sum_{zw} |z><w| x S_zw of shape (4n, 4n),
    block (z, w) = S[4z:4z+4, 4w:4w+4]. ``v`` and ``u`` are constants or
    lists of ``(t, value)`` breakpoints. Channels ``0..d-1`` are diffusive,
    the remaining ``d'`` are counting channels with reference rates ``lambdas``.
    """

    H: np.ndarray
    L: tuple[np.ndarray, ...]
    d: int
    lambdas: tuple[float, ...] = ()
    S: np.ndarray | None = None
    v: PiecewiseConstant | None = None
    u: PiecewiseConstant | None = None
    labels: tuple[str, ...] = ()
    name: str = ""

    def __post_init__(self):
        H = _frozen(as_matrix(self.H, 4))
        if not is_hermitian(H):
            raise ModelError("H is not Hermitian")
        L = tuple(_frozen(as_matrix(l, 4)) for l in self.L)
        n = len(L)
        if n == 0:
            raise ModelError("a monitored model needs at least one channel")
        if not 0 <= self.d <= n:
            raise ModelError(f"d = {self.d} outside 0..{n}")
        lambdas = tuple(float(x) for x in self.lambdas)
        if len(lambdas) != n - self.d:
            raise ModelError(f"need {n - self.d} reference rates, got {len(lambdas)}")
        if any(not x > 0 for x in lambdas):
            raise ModelError("reference rates must be positive")
        S = np.eye(4 * n, dtype=complex) if self.S is None else as_matrix(self.S, 4 * n)
        if not is_unitary(S):
            raise ModelError("S is not unitary")
        v = PiecewiseConstant.build(np.zeros(n) if self.v is None else self.v, (n,))
        u = PiecewiseConstant.build(np.eye(n) if self.u is None else self.u, (n, n))
        for um in u.values:
            if not is_unitary(um):
                raise ModelError("detection matrix u is not unitary")
        labels = tuple(self.labels) or tuple(str(z + 1) for z in range(n))
        if len(labels) != n:
            raise ModelError("one label per channel")
        for name, value in (("H", H), ("L", L), ("lambdas", lambdas), ("S", _frozen(S)),
                            ("v", v), ("u", u), ("labels", labels)):
            object.__setattr__(self, name, value)

    @property
    def n_channels(self) -> int:
        return len(self.L)

    @property
    def d_prime(self) -> int:
        return self.n_channels - self.d

    @property
    def s_is_identity(self) -> bool:
        return bool(np.allclose(self.S, np.eye(self.S.shape[0]), atol=HERMITIAN_TOL, rtol=0))

    def S_block(self, z: int, w: int) -> np.ndarray:
        return self.S[4 * z:4 * z + 4, 4 * w:4 * w + 4]

    @property
    def breakpoints(self) -> tuple[float, ...]:
        return tuple(sorted(set(self.u.times) | set(self.v.times)))

    def detection_operators(self, t: float = 0.0) -> DerivedOperators:
        return detection_operators(self, t)


@dataclass(frozen=True)
class ChannelModel:
    """A model given directly by H_0, diffusive operators and counting channels.

    Used for replacement-jump models whose counting channels carry several
    Kraus operators. Time independent.
    """

    H: np.ndarray
    diffusive: tuple[np.ndarray, ...] = ()
    channels: tuple[JumpChannel, ...] = ()
    name: str = ""
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        H = _frozen(as_matrix(self.H, 4))
        if not is_hermitian(H):
            raise ModelError("H is not Hermitian")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "diffusive", tuple(_frozen(as_matrix(r, 4)) for r in self.diffusive))
        object.__setattr__(self, "channels", tuple(self.channels))

    @property
    def d(self) -> int:
        return len(self.diffusive)

    @property
    def d_prime(self) -> int:
        return len(self.channels)

    @property
    def lambdas(self) -> tuple[float, ...]:
        return tuple(ch.rate for ch in self.channels)

    @property
    def breakpoints(self) -> tuple[float, ...]:
        return (0.0,)

    def detection_operators(self, t: float = 0.0) -> DerivedOperators:
        return DerivedOperators(H0=self.H, diffusive=self.diffusive, channels=self.channels)


Model = MonitoredModel | ChannelModel


def detection_operators(m: Model, t: float = 0.0) -> DerivedOperators:
    """R_j(t) = sum_z u_jz(t) (L_z + sum_w S_zw v_w(t)), H_0(t), and the counting channels."""
    if isinstance(m, ChannelModel):
        return m.detection_operators(t)
    u = m.u.at(t)
    if not is_unitary(u):
        raise ModelError("detection matrix u is not unitary")
    v = m.v.at(t)
    n = m.n_channels
    shifted = [m.L[z] + sum(m.S_block(z, w) * v[w] for w in range(n)) for z in range(n)]
    R = [sum(u[j, z] * shifted[z] for z in range(n)) for j in range(n)]
    corr = np.zeros((4, 4), dtype=complex)
    for z in range(n):
        for w in range(n):
            a = np.conj(v[z]) * _dagger(m.S_block(w, z)) @ m.L[w]
            corr += a - _dagger(a)
    H0 = m.H + 0.5j * corr
    channels = tuple(
        JumpChannel((R[m.d + k],), m.lambdas[k], m.labels[m.d + k]) for k in range(m.d_prime)
    )
    return DerivedOperators(H0=_frozen(H0), diffusive=tuple(_frozen(r) for r in R[:m.d]), channels=channels)


def field_hamiltonian(m: MonitoredModel, t: float = 0.0) -> tuple[np.ndarray, list[np.ndarray]]:
    """H(t) and the shifted operators L~_z(t) of the master equation."""
    v = m.v.at(t)
    n = m.n_channels
    Lt = [m.L[z] + sum((m.S_block(z, w) - (z == w) * I4) * v[w] for w in range(n)) for z in range(n)]
    acc = np.zeros((4, 4), dtype=complex)
    for z in range(n):
        for w in range(n):
            a = np.conj(v[z]) * (_dagger(m.S_block(w, z)) + (z == w) * I4) @ m.L[w]
            a = a + np.conj(v[z]) * m.S_block(z, w) * v[w]
            acc += a - _dagger(a)
    return m.H + 0.5j * acc, Lt


def apply_liouvillian(m: Model, tau, t: float = 0.0) -> np.ndarray:
    """The master-equation generator applied to an arbitrary 4x4 matrix ``tau``."""
    tau = as_matrix(tau, 4)
    if isinstance(m, ChannelModel):
        return m.detection_operators(t).liouvillian(tau)
    H, Lt = field_hamiltonian(m, t)
    out = -1j * (H @ tau - tau @ H)
    for l in Lt:
        ld = _dagger(l)
        out += l @ tau @ ld - 0.5 * (ld @ l @ tau + tau @ ld @ l)
    return out


def liouvillian_superoperator(m: Model, t: float = 0.0) -> np.ndarray:
    """16x16 matrix of the generator acting on row-major vec(tau)."""
    cols = []
    for k in range(16):
        e = np.zeros(16, dtype=complex)
        e[k] = 1.0
        cols.append(apply_liouvillian(m, e.reshape(4, 4), t).reshape(16))
    return np.array(cols).T


def classify_interaction(m: MonitoredModel) -> str:
    """``"none"``, ``"indirect-only"`` or ``"direct"`` for models with S = 1."""
    if isinstance(m, ChannelModel) or not m.s_is_identity:
        raise UnsupportedClassification("interaction classification is implemented for S = 1 only")
    if not is_sum_of_locals(m.H) or not all(is_sum_of_locals(l) for l in m.L):
        return "direct"
    if all(local_factor(l) is not None for l in m.L):
        return "none"
    return "indirect-only"


# -- local detection coefficients ------------------------------------------------


@dataclass(frozen=True)
class LocalCoefficients:
    """Per-channel data for local detection operators R_j = R_j^0 x 1 or 1 x R_j^0.

    ``h_tilde[j]`` and ``ell[j]`` decompose R_j^0 = sum_i h_tilde[j, i] sigma_i + ell[j]/2;
    ``det`` holds det R_{d+k}^0 for the counting channels; ``c`` the decay
    contributions of every channel; ``sides`` the qubit each R_j acts on.
    """

    h_tilde: np.ndarray
    ell: np.ndarray
    det: np.ndarray
    c: np.ndarray
    sides: tuple[int, ...]
    d: int

    @property
    def c_total(self) -> float:
        return float(self.c.sum())


def local_coefficients(m: Model, t: float = 0.0) -> LocalCoefficients:
    ops = detection_operators(m, t)
    R = ops.R
    sides, h, ell = [], [], []
    for j, r in enumerate(R):
        side = local_factor(r)
        if side is None:
            raise NonLocalError(f"detection operator {j + 1} is not local")
        dec = pauli_decompose(local_part(r, side))
        sides.append(side if side else 1)
        h.append(dec.h)
        ell.append(2 * dec.r)
    h = np.array(h)
    ell = np.array(ell)
    d = ops.d
    det = ell[d:] ** 2 / 4 - np.sum(h[d:] ** 2, axis=1)
    c = np.empty(len(R))
    c[:d] = 2 * np.sum(h[:d].real ** 2, axis=1)
    c[d:] = np.abs(ell[d:]) ** 2 / 4 - np.abs(det) + np.sum(np.abs(h[d:]) ** 2, axis=1)
    # c_j >= 0 analytically; clear round-off
    c = np.where(np.abs(c) < 1e-14, 0.0, c)
    return LocalCoefficients(h_tilde=h, ell=ell, det=det, c=c, sides=tuple(sides), d=d)


def h_tilde_from_channels(m: MonitoredModel, t: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """h_tilde and ell from the channel data: h_tilde_ji = sum_z u_jz h_zi, ell_j = 2 sum_z u_jz (r_z + v_z).

    Requires S = 1 and every L_z local.
    """
    if not m.s_is_identity:
        raise ModelError("requires S = 1")
    decs = []
    for l in m.L:
        side = local_factor(l)
        if side is None:
            raise NonLocalError("channel operator is not local")
        decs.append(pauli_decompose(local_part(l, side)))
    hz = np.array([dd.h for dd in decs])
    rz = np.array([dd.r for dd in decs])
    u = m.u.at(t)
    v = m.v.at(t)
    return u @ hz, 2 * u @ (rz + v)
