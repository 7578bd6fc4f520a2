"""Ready-made models for two non-interacting or indirectly coupled qubits.

Every constructor returns a :class:`Preset`. It bundles the model with its
parameters, the names of the closed-form oracles that apply to it, and its
interaction class. Preset ids and parameter names are the strings accepted in
CLI configuration files.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import ChannelModel, JumpChannel, ModelError, MonitoredModel, Model
from .qcore import I4, SM, SP, SX, SY, SZ, bell_basis, ket, local


@dataclass(frozen=True)
class Preset:
    id: str
    model: Model
    params: dict
    oracles: tuple[str, ...] = ()
    classification: str | None = None
    notes: str = ""
    extra: dict = field(default_factory=dict, compare=False)


def _positive(name: str, value: float):
    if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
        raise ModelError(f"{name} must be positive, got {value!r}")


def _free_hamiltonian(omega0: float) -> np.ndarray:
    return omega0 / 2 * (local(SZ, 1) + local(SZ, 2))


def _local_sigma_x(gamma: float) -> tuple[np.ndarray, np.ndarray]:
    a = math.sqrt(gamma / 2)
    return a * local(SX, 1), a * local(SX, 2)


def default_rate(op: np.ndarray) -> float:
    """Reference rate Tr(J^dag J)/4: the intensity of J in the maximally mixed state."""
    return float(np.trace(op.conj().T @ op).real / 4)


def local_diffusive(gamma: float = 1.0, omega0: float = 0.0, phi1: float = 0.0, phi2: float = 0.0) -> Preset:
    """Homodyne-type monitoring of each qubit's own bath, with detection phases phi1, phi2."""
    _positive("gamma", gamma)
    L = _local_sigma_x(gamma)
    model = MonitoredModel(
        H=_free_hamiltonian(omega0), L=L, d=2, u=np.diag([np.exp(1j * phi1), np.exp(1j * phi2)]),
        labels=("W1", "W2"), name="local_diffusive",
    )
    params = dict(gamma=gamma, omega0=omega0, phi1=phi1, phi2=phi2)
    return Preset("local_diffusive", model, params, ("mean_concurrence", "apriori_esd"), "none")


def local_jump(gamma: float = 1.0, omega0: float = 0.0, phi1: float = 0.0, phi2: float = 0.0,
               rates: tuple[float, float] | None = None) -> Preset:
    """Counting observation with the same detection operators as :func:`local_diffusive`."""
    _positive("gamma", gamma)
    L = _local_sigma_x(gamma)
    if rates is None:
        rates = (gamma / 2, gamma / 2)
    model = MonitoredModel(
        H=_free_hamiltonian(omega0), L=L, d=0, lambdas=tuple(rates),
        u=np.diag([np.exp(1j * phi1), np.exp(1j * phi2)]), labels=("N1", "N2"), name="local_jump",
    )
    params = dict(gamma=gamma, omega0=omega0, phi1=phi1, phi2=phi2)
    return Preset("local_jump", model, params, ("mean_concurrence", "apriori_esd"), "none")


def nonlocal_u(theta: float, phi: float) -> np.ndarray:
    a, b = np.exp(1j * (theta + phi)), np.exp(1j * (theta - phi))
    return np.array([[a, b], [1j * a, -1j * b]]) / math.sqrt(2)


def nonlocal_diffusive(gamma: float = 1.0, omega0: float = 0.0, theta: float = 0.0, phi: float = 0.0) -> Preset:
    """Diffusive monitoring of superpositions of the two baths' output fields."""
    _positive("gamma", gamma)
    model = MonitoredModel(
        H=_free_hamiltonian(omega0), L=_local_sigma_x(gamma), d=2, u=nonlocal_u(theta, phi),
        labels=("W1", "W2"), name="nonlocal_diffusive",
    )
    params = dict(gamma=gamma, omega0=omega0, theta=theta, phi=phi)
    oracles = ("nonlocal_chi", "apriori_esd") if omega0 == 0 else ("apriori_esd",)
    return Preset("nonlocal_diffusive", model, params, oracles, "none")


def swap_witness(nu: float = 1.0, lam: float | None = None, refined: bool = False) -> Preset:
    """Bell-state replacement channels: qubits swapped with Bell-paired probes.

    Channel x' counts probes found in |beta_x'> and replaces the state with
    |beta_x'><beta_x'|. The a priori state relaxes to the identity over 4.
    With ``refined`` the 16 channels (x, x') are kept separate, with jump
    operators sqrt(nu/4)|beta_x'><beta_x| and rates lam/16.
    """
    _positive("nu", nu)
    lam = nu if lam is None else lam
    _positive("lam", lam)
    bells = bell_basis()
    amp = math.sqrt(nu / 4)
    channels = []
    if refined:
        for x in range(4):
            for xp in range(4):
                k = amp * np.outer(bells[xp], bells[x].conj())
                channels.append(JumpChannel((k,), lam / 16, f"{x}{xp}"))
    else:
        for xp in range(4):
            basis = (ket("11"), ket("10"), ket("01"), ket("00"))
            kraus = tuple(amp * np.outer(bells[xp], b.conj()) for b in basis)
            channels.append(JumpChannel(kraus, lam / 4, f"beta{xp}"))
    model = ChannelModel(H=np.zeros((4, 4), dtype=complex), channels=tuple(channels), name="swap_witness",
                         metadata=dict(nu=nu, lam=lam, refined=refined))
    params = dict(nu=nu, lam=lam, refined=refined)
    return Preset("swap_witness", model, params, ("sec4_mean_concurrence", "replacement_apriori", "apriori_esd"),
                  "indirect-only")


def gammadelta_operators(gamma_plus: float, delta: float, variant: int) -> list[np.ndarray]:
    """2x2 jump operators of one qubit; all variants give gamma_+ D[s+] + gamma_- D[s-]."""
    gp, gm = gamma_plus, gamma_plus + delta
    if variant == 1:
        return [math.sqrt(gp) * SP, math.sqrt(gm) * SM]
    if variant == 2:
        return [math.sqrt(gp / 2) * SX, math.sqrt(gp / 2) * SY, math.sqrt(delta) * SM]
    if variant == 3:
        a, b = math.sqrt(gp / 2), math.sqrt(gm / 2)
        return [a * SP + b * SM, a * SP - b * SM]
    raise ModelError(f"variant must be 1, 2 or 3, got {variant!r}")


def gammadelta(gamma_plus: float = 0.5, delta: float = 1.0, variant: int = 1, side: int | str = 1) -> Preset:
    """Counting unravelings of a qubit with absorption rate gamma_+ and emission rate gamma_+ + delta.

    ``side`` is 1, 2 or "both". Channels with a zero operator (gamma_+ = 0) are dropped.
    """
    if not (math.isfinite(gamma_plus) and gamma_plus >= 0):
        raise ModelError(f"gamma_plus must be non-negative, got {gamma_plus!r}")
    _positive("delta", delta)
    ops2 = gammadelta_operators(gamma_plus, delta, variant)
    sides = (1, 2) if side == "both" else (side,)
    if any(s not in (1, 2) for s in sides):
        raise ModelError(f"side must be 1, 2 or 'both', got {side!r}")
    L, labels = [], []
    for s in sides:
        for i, op in enumerate(ops2):
            if np.any(op):
                L.append(local(op, s))
                labels.append(f"q{s}J{i + 1}")
    model = MonitoredModel(H=np.zeros((4, 4), dtype=complex), L=tuple(L), d=0,
                           lambdas=tuple(default_rate(x) for x in L), labels=tuple(labels),
                           name=f"gammadelta{variant}")
    params = dict(gamma_plus=gamma_plus, delta=delta, variant=variant, side=side)
    return Preset("gammadelta", model, params, ("mean_concurrence",), "none")


def esd_initial_state() -> np.ndarray:
    """(|10> + i|01>)/sqrt(2), the initial state with finite-time a priori death."""
    return (ket("10") + 1j * ket("01")) / math.sqrt(2)


PRESETS = {
    "local_diffusive": local_diffusive,
    "local_jump": local_jump,
    "nonlocal_diffusive": nonlocal_diffusive,
    "swap_witness": swap_witness,
    "gammadelta": gammadelta,
}


def build(preset_id: str, **params) -> Preset:
    """Construct a preset from its id and keyword parameters."""
    try:
        ctor = PRESETS[preset_id]
    except KeyError:
        raise ModelError(f"unknown preset {preset_id!r}; available: {', '.join(PRESETS)}") from None
    try:
        return ctor(**params)
    except TypeError as exc:
        raise ModelError(f"bad parameters for preset {preset_id!r}: {exc}") from None


def maximally_mixed() -> np.ndarray:
    return I4 / 4
