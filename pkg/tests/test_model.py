import numpy as np
import pytest
from hypothesis import given, settings
from scipy.stats import unitary_group

from monitored_entanglement.model import (
    ChannelModel,
    JumpChannel,
    ModelError,
    MonitoredModel,
    NonLocalError,
    UnsupportedClassification,
    apply_liouvillian,
    classify_interaction,
    detection_operators,
    field_hamiltonian,
    h_tilde_from_channels,
    liouvillian_superoperator,
    local_coefficients,
    local_factor,
    pauli_decompose,
)
from monitored_entanglement.qcore import I2, I4, SM, SP, SX, SY, SZ, det2, local, tensor

from conftest import mat2, random_density, random_matrix


def random_hermitian(rng, n=4):
    a = random_matrix(rng, n)
    return (a + a.conj().T) / 2


def test_pauli_decompose_examples():
    dec = pauli_decompose(SX)
    assert np.allclose(dec.h, [1, 0, 0]) and dec.r == 0
    dec = pauli_decompose(SP)
    assert np.allclose(dec.h, [0.5, 0.5j, 0])
    dec = pauli_decompose(I2)
    assert np.allclose(dec.h, 0) and dec.r == 1


@given(mat2)
def test_pauli_decompose_round_trip(a):
    assert np.allclose(pauli_decompose(a).reconstruct(), a)


def test_local_factor():
    assert local_factor(local(SX, 1)) == 1
    assert local_factor(local(SY, 2)) == 2
    assert local_factor(3 * I4) == 0
    assert local_factor(tensor(SX, SX)) is None
    assert local_factor(local(SX, 1) + local(SX, 2)) is None


def test_model_validation():
    with pytest.raises(ModelError):
        MonitoredModel(H=np.diag([1j, 0, 0, 0]), L=(local(SX, 1),), d=1)
    with pytest.raises(ModelError):
        MonitoredModel(H=np.zeros((4, 4)), L=(local(SX, 1),), d=0)  # missing rate
    with pytest.raises(ModelError):
        MonitoredModel(H=np.zeros((4, 4)), L=(local(SX, 1),), d=0, lambdas=(-1.0,))
    with pytest.raises(ModelError):
        MonitoredModel(H=np.zeros((4, 4)), L=(local(SX, 1),), d=1, u=np.array([[2.0]]))
    with pytest.raises(ModelError):
        JumpChannel((), 1.0)


def test_models_are_read_only():
    m = MonitoredModel(H=np.zeros((4, 4)), L=(local(SX, 1),), d=1)
    with pytest.raises(ValueError):
        m.H[0, 0] = 1


def _random_model(rng, n=3, d=1, time_dependent=False):
    H = random_hermitian(rng)
    L = tuple(random_matrix(rng, 4) * 0.5 for _ in range(n))
    S = unitary_group.rvs(4 * n, random_state=1)
    v = rng.normal(size=n) + 1j * rng.normal(size=n)
    u = unitary_group.rvs(n, random_state=2)
    if time_dependent:
        v = [(0.0, v), (0.5, 2 * v)]
        u = [(0.0, u), (0.3, unitary_group.rvs(n, random_state=3))]
    return MonitoredModel(H=H, L=L, d=d, lambdas=tuple(rng.uniform(0.5, 2, n - d)), S=S, v=v, u=u)


def test_liouvillian_agrees_with_detection_operators(rng):
    """-i[H,.] + sum D[L~_z] equals -i[H0,.] + sum D[R_j] for any S, v and u."""
    m = _random_model(rng, time_dependent=True)
    for t in (0.0, 0.4, 1.0):
        ops = detection_operators(m, t)
        for _ in range(3):
            tau = random_matrix(rng, 4)
            assert np.allclose(apply_liouvillian(m, tau, t), ops.liouvillian(tau), atol=1e-12)


def test_liouvillian_trace_preserving_and_hermiticity(rng):
    m = _random_model(rng)
    for _ in range(5):
        rho = random_density(rng)
        out = apply_liouvillian(m, rho)
        assert abs(np.trace(out)) < 1e-12
        assert np.allclose(out, out.conj().T, atol=1e-12)


def test_superoperator_matches_direct_action(rng):
    m = _random_model(rng)
    Lsup = liouvillian_superoperator(m)
    tau = random_matrix(rng, 4)
    assert np.allclose((Lsup @ tau.reshape(16)).reshape(4, 4), apply_liouvillian(m, tau))


def test_detection_does_not_change_master_equation(rng):
    L = (np.sqrt(0.5) * local(SX, 1), np.sqrt(0.5) * local(SX, 2))
    H = 0.3 * (local(SZ, 1) + local(SZ, 2))
    base = MonitoredModel(H=H, L=L, d=2)
    other = MonitoredModel(H=H, L=L, d=1, lambdas=(0.7,), u=unitary_group.rvs(2, random_state=5))
    tau = random_matrix(rng, 4)
    assert np.allclose(apply_liouvillian(base, tau), apply_liouvillian(other, tau), atol=1e-12)


def test_field_hamiltonian_is_hermitian(rng):
    m = _random_model(rng)
    H, _ = field_hamiltonian(m)
    assert np.allclose(H, H.conj().T)


def test_classify_interaction():
    L = (local(SX, 1), local(SX, 2))
    assert classify_interaction(MonitoredModel(H=local(SZ, 1), L=L, d=2)) == "none"
    assert classify_interaction(MonitoredModel(H=np.zeros((4, 4)), L=(local(SX, 1) + local(SX, 2),), d=1)) \
        == "indirect-only"
    assert classify_interaction(MonitoredModel(H=tensor(SZ, SZ), L=L, d=2)) == "direct"
    with pytest.raises(UnsupportedClassification):
        classify_interaction(MonitoredModel(H=np.zeros((4, 4)), L=(local(SX, 1),), d=1,
                                            S=np.kron(np.eye(1), local(SX, 2))))
    with pytest.raises(UnsupportedClassification):
        classify_interaction(ChannelModel(H=np.zeros((4, 4))))


def _general_c(m):
    """c from kappa, lambda_k, d_k and ell_j, independent of the per-channel split."""
    ops = detection_operators(m)
    co = local_coefficients(m)
    kappa = np.trace(ops.K) / 2 + ops.lambdas.sum() + sum(
        det2(pauli_decompose_local(r)) for r in ops.diffusive)
    c = np.sum(ops.lambdas - np.abs(co.det)) - 0.5 * np.sum(co.ell[:co.d].imag ** 2) - kappa.real
    return c


def pauli_decompose_local(r):
    from monitored_entanglement.model import local_part

    return local_part(r, local_factor(r))


@pytest.mark.parametrize("d", [0, 1, 2, 3])
def test_channel_coefficients_sum_to_general_c(rng, d):
    ops2 = [random_matrix(rng, 2) * 0.6 for _ in range(3)]
    L = (local(ops2[0], 1), local(ops2[1], 2), local(ops2[2], 1))
    H = local(random_hermitian(rng, 2), 1) + local(random_hermitian(rng, 2), 2)
    m = MonitoredModel(H=H, L=L, d=d, lambdas=tuple(rng.uniform(0.5, 2.0, 3 - d)),
                       v=rng.normal(size=3) + 1j * rng.normal(size=3),
                       u=np.diag(np.exp(1j * rng.uniform(0, 6, 3))))
    co = local_coefficients(m)
    assert np.all(co.c >= 0)
    assert np.isclose(co.c_total, _general_c(m), atol=1e-12)


def test_h_tilde_from_channels_matches_decomposition(rng):
    L = (local(random_matrix(rng, 2), 1), local(random_matrix(rng, 2), 2))
    v = rng.normal(size=2) + 1j * rng.normal(size=2)
    u = np.diag(np.exp(1j * rng.uniform(0, 6, 2)))
    m = MonitoredModel(H=np.zeros((4, 4)), L=L, d=2, v=v, u=u)
    h, ell = h_tilde_from_channels(m)
    co = local_coefficients(m)
    assert np.allclose(h, co.h_tilde) and np.allclose(ell, co.ell)


def test_local_coefficients_rejects_nonlocal():
    m = MonitoredModel(H=np.zeros((4, 4)), L=(local(SX, 1), local(SX, 2)), d=2,
                       u=np.array([[1, 1], [1, -1]]) / np.sqrt(2))
    with pytest.raises(NonLocalError):
        local_coefficients(m)


def test_jump_channel_apply_and_effect(rng):
    ks = (random_matrix(rng, 4), random_matrix(rng, 4))
    ch = JumpChannel(ks, 0.3)
    rho = random_density(rng)
    assert np.allclose(ch.apply(rho), sum(k @ rho @ k.conj().T for k in ks))
    assert np.isclose(ch.intensity(rho), np.trace(ch.apply(rho)).real)
    stack = np.stack([rho, 2 * rho])
    assert np.allclose(ch.apply(stack)[1], 2 * ch.apply(rho))
