"""Core quantum state and channel primitives.

Conventions used throughout the package:

* density matrices are plain ``numpy`` arrays of ``complex128``, Hermitian,
  unit trace, positive semidefinite;
* a Kraus map is a sequence of square matrices ``K_i`` with
  ``sum_i K_i^dag K_i = I``;
* qubit states map to Bloch vectors via ``rho = (I + r . sigma)/2`` with
  ``r_a = Tr(rho sigma_a)``;
* superoperators act on column-stacked states: ``vec(A)[i + N*j] = A[i, j]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

# Structural validation (Hermiticity, trace, positivity) default tolerance.
STRUCTURAL_TOL = 1e-9
# Tolerance for numerical identities expected to hold to machine precision.
IDENTITY_TOL = 1e-12

PAULI_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
PAULI_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
PAULI_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
SIGMA_PLUS = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)
SIGMA_MINUS = np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex)


class DimensionMismatchError(ValueError):
    """Operands have incompatible or malformed dimensions."""


def _as_square(a, name: str) -> np.ndarray:
    m = np.asarray(a, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatchError(f"{name} must be a square matrix, got shape {m.shape}")
    return m


def herm(a: np.ndarray) -> np.ndarray:
    """Hermitian part (A + A^dag)/2."""
    return 0.5 * (a + a.conj().T)


def dag(a: np.ndarray) -> np.ndarray:
    """Conjugate transpose."""
    return a.conj().T


def vec(a: np.ndarray) -> np.ndarray:
    """Column-stack a matrix into a vector."""
    return np.asarray(a).reshape(-1, order="F")


def unvec(v: np.ndarray) -> np.ndarray:
    """Inverse of :func:`vec` for square matrices."""
    v = np.asarray(v)
    n = int(round(np.sqrt(v.size)))
    if n * n != v.size:
        raise DimensionMismatchError(f"vector of length {v.size} is not a square matrix")
    return v.reshape(n, n, order="F")


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of a density-matrix validation.

    ``worst`` names the largest violation among ``hermiticity``, ``trace``
    and ``positivity``; the corresponding magnitudes are kept so callers can
    report how badly a state failed.
    """

    ok: bool
    hermiticity_error: float
    trace_error: float
    min_eigenvalue: float
    worst: str

    def __bool__(self) -> bool:
        return self.ok


def validate_density(rho, tol: float = STRUCTURAL_TOL) -> ValidationReport:
    """Check the Hermiticity, trace and positivity invariants of a state.

    The positivity test runs on the symmetrized matrix (rho + rho^dag)/2 so
    a Hermiticity failure does not masquerade as a negative eigenvalue.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    m = _as_square(rho, "rho")
    if m.shape[0] < 2:
        raise DimensionMismatchError("density matrix must have dimension >= 2")
    herm_err = float(np.max(np.abs(m - m.conj().T)))
    trace_err = float(abs(np.trace(m) - 1.0))
    min_eig = float(np.linalg.eigvalsh(herm(m)).min())
    violations = {
        "hermiticity": herm_err,
        "trace": trace_err,
        "positivity": max(0.0, -min_eig),
    }
    worst = max(violations, key=violations.get)
    ok = herm_err <= tol and trace_err <= tol and min_eig >= -tol
    return ValidationReport(ok, herm_err, trace_err, min_eig, worst)


def bloch_from_density(rho) -> np.ndarray:
    """Bloch vector (x, y, z) of a qubit state, r_a = Tr(rho sigma_a)."""
    m = _as_square(rho, "rho")
    if m.shape != (2, 2):
        raise DimensionMismatchError("Bloch mapping requires a 2x2 state")
    return np.array(
        [
            np.trace(m @ PAULI_X).real,
            np.trace(m @ PAULI_Y).real,
            np.trace(m @ PAULI_Z).real,
        ]
    )


def density_from_bloch(r, tol: float = STRUCTURAL_TOL) -> np.ndarray:
    """Qubit state (I + r . sigma)/2 for a Bloch vector inside the unit ball."""
    r = np.asarray(r, dtype=float)
    if r.shape != (3,):
        raise DimensionMismatchError("Bloch vector must have three components")
    norm = float(np.linalg.norm(r))
    if norm > 1.0 + tol:
        raise ValueError(f"Bloch vector has norm {norm} > 1")
    return 0.5 * (np.eye(2, dtype=complex) + r[0] * PAULI_X + r[1] * PAULI_Y + r[2] * PAULI_Z)


def kraus_constraint_residual(kraus: Sequence[np.ndarray]) -> float:
    """Frobenius norm of sum_i K_i^dag K_i - I.

    Zero exactly when the operators form a trace-preserving map; invariant
    under unitary remixing of the operator list.
    """
    if len(kraus) == 0:
        raise ValueError("empty Kraus operator list")
    ops = [_as_square(k, "Kraus operator") for k in kraus]
    n = ops[0].shape[0]
    for k in ops[1:]:
        if k.shape != (n, n):
            raise DimensionMismatchError("Kraus operators must share one dimension")
    acc = np.zeros((n, n), dtype=complex)
    for k in ops:
        acc += k.conj().T @ k
    return float(np.linalg.norm(acc - np.eye(n)))


def apply_kraus(kraus: Sequence[np.ndarray], rho, tol: float = STRUCTURAL_TOL) -> np.ndarray:
    """Apply the channel rho -> sum_i K_i rho K_i^dag.

    Raises if the operator list misses the trace-preservation constraint by
    more than ``tol``.
    """
    m = _as_square(rho, "rho")
    residual = kraus_constraint_residual(kraus)
    if residual > tol:
        raise ValueError(f"Kraus constraint residual {residual:.3e} exceeds tolerance {tol:.3e}")
    if np.asarray(kraus[0]).shape[0] != m.shape[0]:
        raise DimensionMismatchError("Kraus operators and state have different dimensions")
    out = np.zeros_like(m)
    for k in kraus:
        k = np.asarray(k, dtype=complex)
        out += k @ m @ k.conj().T
    return out


def expectation(rho, observable) -> float:
    """Tr(rho O); real for Hermitian inputs."""
    m = _as_square(rho, "rho")
    o = _as_square(observable, "observable")
    if m.shape != o.shape:
        raise DimensionMismatchError("state and observable have different dimensions")
    return float(np.trace(m @ o).real)


def random_hermitian(n: int, rng: np.random.Generator) -> np.ndarray:
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return herm(a)


def random_density(n: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    """Random full-rank (or fixed-rank) density matrix, Wishart construction."""
    r = n if rank is None else rank
    a = rng.standard_normal((n, r)) + 1j * rng.standard_normal((n, r))
    m = a @ a.conj().T
    return m / np.trace(m).real


def random_kraus(n: int, n_ops: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Random trace-preserving Kraus set via QR orthonormalization.

    The stacked (n_ops*n, n) block matrix is drawn Gaussian and
    orthonormalized, so the constraint holds to machine precision.
    """
    z = rng.standard_normal((n_ops * n, n)) + 1j * rng.standard_normal((n_ops * n, n))
    q, _ = np.linalg.qr(z)
    return [q[i * n : (i + 1) * n, :].copy() for i in range(n_ops)]


def random_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))
