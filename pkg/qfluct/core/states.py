from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.special import entr, logsumexp

from qfluct.core.config import get_tolerances
from qfluct.core.errors import BadRank, NegativeEigenvalue, NonFiniteBeta, TraceNotOne
from qfluct.core.linalg import (
    ComplexMatrix,
    SpectralDecomposition,
    freeze,
    as_matrix,
    haar_unitary,
    hermitian_eig,
    partial_trace,
)

Seed = Union[int, np.random.Generator, None]


def _rng(seed: Seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class DensityOperator:
    """Unit-trace positive operator with its cached spectral decomposition."""

    matrix: ComplexMatrix
    spectrum: SpectralDecomposition

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def probabilities(self) -> np.ndarray:
        return self.spectrum.eigenvalues

    @property
    def basis(self) -> np.ndarray:
        return self.spectrum.eigenvectors

    @property
    def rank(self) -> int:
        return int(np.count_nonzero(self.probabilities > get_tolerances().probability_floor))


@dataclass(frozen=True)
class ThermalState(DensityOperator):
    """Gibbs state of a reservoir; eigen-pairs are ordered by ascending energy."""

    energies: Optional[np.ndarray] = None
    beta: float = 0.0
    log_probabilities: Optional[np.ndarray] = None


@dataclass(frozen=True)
class BipartiteState:
    d_A: int
    d_B: int
    joint: DensityOperator
    marginal_A: DensityOperator
    marginal_B: DensityOperator


def make_density(M, rotation_rng: Optional[np.random.Generator] = None) -> DensityOperator:
    """
    Validate a matrix as a density operator and cache its spectrum.

    Eigenvalues within the negative-eigenvalue band below zero are clipped to 0.

    Args:
        M: Candidate density matrix
        rotation_rng: Passed to hermitian_eig to rotate degenerate eigenspaces

    Returns:
        DensityOperator: The validated state
    """
    tolerances = get_tolerances()
    matrix = as_matrix(M, "density matrix")
    spectrum = hermitian_eig(matrix, rotation_rng=rotation_rng)

    trace = float(np.real(np.trace(matrix)))
    if abs(trace - 1.0) > tolerances.trace:
        raise TraceNotOne(f"trace is {trace!r}, expected 1")

    values = spectrum.eigenvalues
    if values.size and values.min() < -tolerances.negative_eigenvalue:
        raise NegativeEigenvalue(f"smallest eigenvalue {values.min():.3e} is negative")

    clipped = np.clip(values, 0.0, 1.0)
    spectrum = SpectralDecomposition(eigenvalues=freeze(clipped), eigenvectors=spectrum.eigenvectors)
    return DensityOperator(matrix=freeze(matrix), spectrum=spectrum)


def thermal_state(H_R, beta: float) -> ThermalState:
    """
    Gibbs state e^{-beta H_R}/Z built in the eigenbasis of H_R.

    Args:
        H_R: Reservoir Hamiltonian
        beta: Inverse temperature, finite and non-negative

    Returns:
        ThermalState: State with (energy, probability) pairs in ascending energy
    """
    if not np.isfinite(beta) or beta < 0:
        raise NonFiniteBeta(f"beta must be finite and non-negative, got {beta!r}")
    hamiltonian = as_matrix(H_R, "H_R")
    decomposition = hermitian_eig(hamiltonian)

    energies = decomposition.eigenvalues[::-1].copy()
    vectors = decomposition.eigenvectors[:, ::-1].copy()
    exponents = -beta * energies
    log_probabilities = exponents - logsumexp(exponents)
    probabilities = np.exp(log_probabilities)

    matrix = (vectors * probabilities[np.newaxis, :]) @ np.conjugate(vectors).T
    spectrum = SpectralDecomposition(eigenvalues=freeze(probabilities), eigenvectors=freeze(vectors))
    return ThermalState(
        matrix=freeze(matrix),
        spectrum=spectrum,
        energies=freeze(energies),
        beta=float(beta),
        log_probabilities=freeze(log_probabilities),
    )


def make_bipartite(
    M,
    d_A: int,
    d_B: int,
    rotation_rng: Optional[np.random.Generator] = None,
) -> BipartiteState:
    """Build a bipartite state together with both validated marginals."""
    joint = make_density(M, rotation_rng=rotation_rng)
    dims = (d_A, d_B)
    marginal_A = make_density(partial_trace(joint.matrix, dims, keep="A"), rotation_rng=rotation_rng)
    marginal_B = make_density(partial_trace(joint.matrix, dims, keep="B"), rotation_rng=rotation_rng)
    return BipartiteState(d_A=d_A, d_B=d_B, joint=joint, marginal_A=marginal_A, marginal_B=marginal_B)


def shannon_entropy(probabilities: np.ndarray) -> float:
    """Entropy in nats with 0 ln 0 = 0."""
    return float(np.sum(entr(np.clip(np.asarray(probabilities, dtype=float), 0.0, None))))


def von_neumann_entropy(rho: DensityOperator) -> float:
    return shannon_entropy(rho.probabilities)


def quantum_mutual_information(state: BipartiteState) -> float:
    return (
        von_neumann_entropy(state.marginal_A)
        + von_neumann_entropy(state.marginal_B)
        - von_neumann_entropy(state.joint)
    )


def classical_mutual_information(joint: np.ndarray) -> float:
    """H(A) + H(B) - H(A,B) for a joint distribution given as a d_A x d_B array."""
    joint = np.asarray(joint, dtype=float)
    return (
        shannon_entropy(joint.sum(axis=1))
        + shannon_entropy(joint.sum(axis=0))
        - shannon_entropy(joint.ravel())
    )


def random_density(d: int, rank: int, seed: Seed = None) -> DensityOperator:
    """Random state G G^dagger / Tr(G G^dagger) with G a d x rank Ginibre matrix."""
    if not 1 <= rank <= d:
        raise BadRank(f"rank must satisfy 1 <= rank <= {d}, got {rank}")
    rng = _rng(seed)
    G = rng.standard_normal((d, rank)) + 1j * rng.standard_normal((d, rank))
    rho = G @ np.conjugate(G).T
    rho /= np.real(np.trace(rho))
    return make_density(rho)


def random_unitary(d: int, seed: Seed = None) -> ComplexMatrix:
    return haar_unitary(d, _rng(seed))
