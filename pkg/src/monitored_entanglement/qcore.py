"""Dense linear algebra for two qubits.

Every 4x4 operator and 4-vector in the package is expressed in the
computational basis ordered as

    u1 = |11>,  u2 = |10>,  u3 = |01>,  u4 = |00>

so a single-qubit 2x2 matrix is indexed (|1>, |0>) and the Kronecker product
``np.kron(a, b)`` puts the first factor on the left qubit.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
POSITIVITY_TOL = 1e-10

I2 = np.eye(2, dtype=complex)
I4 = np.eye(4, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = (SX, SY, SZ)
# raising/lowering in the (|1>, |0>) ordering: SP|0> = |1>
SP = (SX + 1j * SY) / 2
SM = (SX - 1j * SY) / 2

SYSY = np.kron(SY, SY)
SZSZ = np.kron(SZ, SZ)

BASIS_LABELS = ("11", "10", "01", "00")


class DimensionError(ValueError):
    """An operand does not have the shape an operation requires."""


def as_matrix(a, dim: int | None = None) -> np.ndarray:
    """Return ``a`` as a complex square matrix, optionally checking its size."""
    m = np.asarray(a, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {m.shape}")
    if dim is not None and m.shape[0] != dim:
        raise DimensionError(f"expected a {dim}x{dim} matrix, got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return m


def as_state(phi) -> np.ndarray:
    v = np.asarray(phi, dtype=complex)
    if v.shape != (4,):
        raise DimensionError(f"expected a 4-component state vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("state vector has non-finite components")
    return v


def tensor(a, b) -> np.ndarray:
    """Kronecker product of two single-qubit operators (``a`` acts on qubit 1)."""
    return np.kron(as_matrix(a, 2), as_matrix(b, 2))


def local(a, factor: int) -> np.ndarray:
    """Embed a 2x2 operator on qubit ``factor`` (1 or 2)."""
    if factor == 1:
        return tensor(a, I2)
    if factor == 2:
        return tensor(I2, a)
    raise ValueError(f"factor must be 1 or 2, got {factor!r}")


def t_conjugate(phi) -> np.ndarray:
    """Complex-conjugate the components of ``phi`` in the computational basis."""
    return np.conj(as_state(phi))


def ket(label: str) -> np.ndarray:
    """Computational basis vector, e.g. ``ket("10")``."""
    v = np.zeros(4, dtype=complex)
    v[BASIS_LABELS.index(label)] = 1.0
    return v


def bell_basis() -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """The Bell vectors beta_0 = (|00> + |11>)/sqrt(2), beta_i = (sigma_i x 1) beta_0."""
    b0 = (ket("00") + ket("11")) / np.sqrt(2)
    return (b0,) + tuple(local(s, 1) @ b0 for s in PAULI)


def projector(phi) -> np.ndarray:
    v = as_state(phi)
    return np.outer(v, v.conj())


def partial_trace(rho, which: int) -> np.ndarray:
    """Trace out qubit ``which`` (1 or 2) and return the 2x2 reduced matrix."""
    r = as_matrix(rho, 4).reshape(2, 2, 2, 2)
    if which == 1:
        return np.einsum("ajak->jk", r)
    if which == 2:
        return np.einsum("iaja->ij", r)
    raise ValueError(f"which must be 1 or 2, got {which!r}")


def det2(a) -> complex:
    m = as_matrix(a, 2)
    return complex(m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0])


def is_hermitian(a, tol: float = HERMITIAN_TOL) -> bool:
    m = np.asarray(a, dtype=complex)
    return bool(np.max(np.abs(m - m.conj().T), initial=0.0) <= tol)


def is_unitary(a, tol: float = HERMITIAN_TOL) -> bool:
    m = np.asarray(a, dtype=complex)
    return bool(np.max(np.abs(m.conj().T @ m - np.eye(m.shape[0])), initial=0.0) <= tol)


def check_density(rho, normalized: bool = True) -> np.ndarray:
    """Validate a 4x4 density operator and return it as an array.

    Raises ``ValueError`` when the matrix is not Hermitian, not positive
    (eigenvalues below ``-POSITIVITY_TOL``), or, with ``normalized``, does
    not have unit trace.
    """
    m = as_matrix(rho, 4)
    if not is_hermitian(m):
        raise ValueError("density operator is not Hermitian")
    if normalized and abs(np.trace(m) - 1) > TRACE_TOL:
        raise ValueError(f"density operator has trace {np.trace(m).real:.3g}, expected 1")
    if np.linalg.eigvalsh(m).min() < -POSITIVITY_TOL:
        raise ValueError("density operator is not positive")
    return m


def trace_distance(a, b) -> float:
    """Half the trace norm of ``a - b`` (both Hermitian)."""
    diff = np.asarray(a, dtype=complex) - np.asarray(b, dtype=complex)
    diff = (diff + diff.conj().T) / 2
    return float(0.5 * np.abs(np.linalg.eigvalsh(diff)).sum())


# Matrix literals: row-major list of [re, im] pairs.


def matrix_to_literal(a) -> list[list[float]]:
    m = np.asarray(a, dtype=complex)
    return [[float(z.real), float(z.imag)] for z in m.reshape(-1)]


def matrix_from_literal(lit, dim: int | None = None) -> np.ndarray:
    """Parse a matrix literal.

    Accepts the flat form (``n*n`` pairs, row-major) and, for convenience,
    a list of rows of pairs.
    """
    arr = np.asarray(lit, dtype=float)
    if arr.ndim == 3 and arr.shape[-1] == 2:
        arr = arr.reshape(-1, 2)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("matrix literal must be a list of [re, im] pairs")
    n = int(round(np.sqrt(arr.shape[0])))
    if n * n != arr.shape[0]:
        raise ValueError(f"matrix literal has {arr.shape[0]} entries, not a square count")
    m = (arr[:, 0] + 1j * arr[:, 1]).reshape(n, n)
    return as_matrix(m, dim)


def vector_to_literal(v: Sequence[complex]) -> list[list[float]]:
    return [[float(complex(z).real), float(complex(z).imag)] for z in v]


def vector_from_literal(lit) -> np.ndarray:
    arr = np.asarray(lit, dtype=float)
    if arr.ndim == 1 and arr.size == 0:
        return np.zeros(0, dtype=complex)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("vector literal must be a list of [re, im] pairs")
    return arr[:, 0] + 1j * arr[:, 1]


def complex_from_literal(lit) -> complex:
    if isinstance(lit, (int, float)):
        return complex(lit)
    re, im = lit
    return complex(re, im)
