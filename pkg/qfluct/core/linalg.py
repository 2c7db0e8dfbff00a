from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from qfluct.core.config import get_tolerances
from qfluct.core.errors import DimensionMismatch, NotHermitian, NotSquare

# Dense complex matrix; every state, Hamiltonian and unitary is one of these.
ComplexMatrix = np.ndarray

# Residual norm below which a projected basis vector is skipped during
# canonicalisation of a degenerate eigenspace
CANONICAL_PIVOT_THRESHOLD = 1e-6


def freeze(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


def as_matrix(M, name: str = "matrix") -> ComplexMatrix:
    """
    Convert input to a finite complex128 2-D array.

    Args:
        M: Anything numpy can turn into a 2-D array
        name: Used in error messages

    Returns:
        ComplexMatrix: A fresh complex128 copy
    """
    array = np.array(M, dtype=np.complex128)
    if array.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {array.shape}")
    if not np.all(np.isfinite(array)):
        raise ValueError(f"{name} contains NaN or Inf entries")
    return array


def _require_square(M: ComplexMatrix, name: str = "matrix") -> int:
    if M.shape[0] != M.shape[1]:
        raise NotSquare(f"{name} must be square, got shape {M.shape}")
    return M.shape[0]


def dagger(M: ComplexMatrix) -> ComplexMatrix:
    return np.conjugate(np.asarray(M)).T


def matmul(A: ComplexMatrix, B: ComplexMatrix) -> ComplexMatrix:
    if A.shape[1] != B.shape[0]:
        raise DimensionMismatch(f"cannot multiply {A.shape} by {B.shape}")
    return A @ B


def apply_to_vector(M: ComplexMatrix, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.complex128)
    if v.ndim != 1 or M.shape[1] != v.shape[0]:
        raise DimensionMismatch(f"cannot apply {M.shape} matrix to vector of shape {v.shape}")
    return M @ v


def kron(A: ComplexMatrix, B: ComplexMatrix) -> ComplexMatrix:
    # Leftmost factor is the slowest-varying index: i = i_A * d_B + i_B
    return np.kron(A, B)


def kron_all(factors: Sequence[ComplexMatrix]) -> ComplexMatrix:
    result = np.eye(1, dtype=np.complex128)
    for factor in factors:
        result = kron(result, factor)
    return result


def partial_trace(M: ComplexMatrix, dims: Tuple[int, int], keep: str) -> ComplexMatrix:
    """
    Trace out one factor of a two-factor operator.

    Args:
        M: Square matrix on a space of dimension d_A * d_B
        dims: (d_A, d_B)
        keep: "A" to return Tr_B(M), "B" to return Tr_A(M)

    Returns:
        ComplexMatrix: The reduced operator
    """
    d_a, d_b = dims
    n = _require_square(M)
    if n != d_a * d_b:
        raise DimensionMismatch(f"matrix of dimension {n} does not factor as {d_a}x{d_b}")
    tensor = M.reshape(d_a, d_b, d_a, d_b)
    if keep == "A":
        return np.einsum("ijkj->ik", tensor)
    if keep == "B":
        return np.einsum("ijil->jl", tensor)
    raise ValueError(f"keep must be 'A' or 'B', got {keep!r}")


def is_unitary(M: ComplexMatrix, tol: Optional[float] = None) -> bool:
    if tol is None:
        tol = get_tolerances().unitarity
    n = _require_square(M)
    residual = dagger(M) @ M - np.eye(n)
    return bool(np.max(np.abs(residual)) <= tol)


def hermiticity_residual(M: ComplexMatrix) -> float:
    return float(np.max(np.abs(M - dagger(M)))) if M.size else 0.0


def haar_unitary(d: int, rng: np.random.Generator) -> ComplexMatrix:
    """Haar-distributed unitary from the QR decomposition of a Ginibre matrix."""
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2.0)
    q, r = scipy.linalg.qr(z)
    # Phase correction on the R diagonal makes the distribution exactly Haar
    diagonal = np.diagonal(r)
    phases = diagonal / np.abs(diagonal)
    return q * phases[np.newaxis, :]


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenvalues in descending order with orthonormal eigenvectors as columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def dim(self) -> int:
        return self.eigenvalues.shape[0]

    def reconstruct(self) -> ComplexMatrix:
        V = self.eigenvectors
        return (V * self.eigenvalues[np.newaxis, :]) @ dagger(V)

    def reconstruction_error(self, M: ComplexMatrix) -> float:
        norm = np.linalg.norm(M)
        error = np.linalg.norm(self.reconstruct() - M)
        return float(error / norm) if norm > 0 else float(error)

    def orthonormality_error(self) -> float:
        V = self.eigenvectors
        return float(np.max(np.abs(dagger(V) @ V - np.eye(self.dim)))) if self.dim else 0.0


def _fix_phase(v: np.ndarray) -> np.ndarray:
    magnitudes = np.abs(v)
    pivot = int(np.argmax(magnitudes >= magnitudes.max() - 1e-12))
    return v * (np.conjugate(v[pivot]) / magnitudes[pivot])


def _canonical_cluster_basis(block: np.ndarray) -> np.ndarray:
    # Gram-Schmidt on P e_0, P e_1, ... depends only on the projector P, not on
    # the basis the eigensolver happened to return
    dim, size = block.shape
    projector = block @ dagger(block)
    basis: List[np.ndarray] = []
    for j in range(dim):
        if len(basis) == size:
            break
        candidate = projector[:, j].copy()
        for _ in range(2):
            for q in basis:
                candidate -= q * np.vdot(q, candidate)
        norm = np.linalg.norm(candidate)
        if norm <= CANONICAL_PIVOT_THRESHOLD:
            continue
        candidate /= norm
        candidate *= np.conjugate(candidate[j]) / abs(candidate[j])
        basis.append(candidate)
    if len(basis) != size:
        # Cannot happen for an orthonormal block; keep the solver's basis
        return block
    return np.column_stack(basis)


def _clusters(eigenvalues: np.ndarray, gap: float) -> List[Tuple[int, int]]:
    scale = float(np.max(np.abs(eigenvalues))) if eigenvalues.size else 0.0
    threshold = gap * scale
    clusters = []
    start = 0
    for k in range(1, eigenvalues.shape[0] + 1):
        if k == eigenvalues.shape[0] or eigenvalues[k - 1] - eigenvalues[k] > threshold:
            clusters.append((start, k))
            start = k
    return clusters


def hermitian_eig(
    M: ComplexMatrix,
    rotation_rng: Optional[np.random.Generator] = None,
) -> SpectralDecomposition:
    """
    Eigendecomposition of a Hermitian matrix with a reproducible eigenbasis.

    Degenerate clusters get the canonical basis built from the cluster projector.
    If rotation_rng is given, each degenerate cluster is then rotated by a Haar
    unitary, which changes the basis but not the projector.

    Args:
        M: Square Hermitian matrix
        rotation_rng: Optional generator for rotating degenerate clusters

    Returns:
        SpectralDecomposition: Descending eigenvalues with eigenvectors as columns
    """
    tolerances = get_tolerances()
    M = np.asarray(M, dtype=np.complex128)
    if M.ndim != 2:
        raise DimensionMismatch(f"expected a matrix, got shape {M.shape}")
    _require_square(M)
    residual = hermiticity_residual(M)
    if residual > tolerances.hermiticity:
        raise NotHermitian(f"matrix deviates from Hermitian by {residual:.3e}")

    hermitian = (M + dagger(M)) / 2.0
    values, vectors = scipy.linalg.eigh(hermitian)
    values = values[::-1].copy()
    vectors = vectors[:, ::-1].copy()

    for start, stop in _clusters(values, tolerances.degeneracy_gap):
        if stop - start == 1:
            vectors[:, start] = _fix_phase(vectors[:, start])
            continue
        block = _canonical_cluster_basis(vectors[:, start:stop])
        if rotation_rng is not None:
            block = block @ haar_unitary(stop - start, rotation_rng)
        vectors[:, start:stop] = block
        values[start:stop] = values[start:stop].mean()

    return SpectralDecomposition(eigenvalues=freeze(values), eigenvectors=freeze(vectors))
