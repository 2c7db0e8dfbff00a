"""
Forward and time-reversed trajectory distributions of the two-point measurement
protocol in which the total system AB is measured and the subsystem outcomes are
conditioned on the measured eigenstate.

Tensor order is A (x) B (x) R throughout; trajectories are indexed by
(m, a, b, r, m', a', b', r') in lexicographic order.
"""
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterator, List, Optional, Tuple

import numpy as np

from qfluct.core.config import default_workers, get_tolerances
from qfluct.core.errors import DimensionMismatch, NotUnitary, SupportEmpty
from qfluct.core.linalg import ComplexMatrix, as_matrix, dagger, freeze, is_unitary, kron, partial_trace
from qfluct.core.states import BipartiteState, ThermalState, make_bipartite, thermal_state
from qfluct.utils.log_utils import log_debug

TRAJECTORY_COLUMNS = ("m", "a", "b", "r", "m'", "a'", "b'", "r'")
INITIAL = "initial"
FINAL = "final"


@dataclass(frozen=True)
class ProcessSpec:
    """Initial bipartite state, reservoir and global unitary of one experiment."""

    bipartite_initial: BipartiteState
    H_R: ComplexMatrix
    beta: float
    U: ComplexMatrix
    reservoir: ThermalState

    @property
    def d_A(self) -> int:
        return self.bipartite_initial.d_A

    @property
    def d_B(self) -> int:
        return self.bipartite_initial.d_B

    @property
    def d_AB(self) -> int:
        return self.d_A * self.d_B

    @property
    def d_R(self) -> int:
        return self.H_R.shape[0]

    @property
    def dims(self) -> Tuple[int, int, int]:
        return (self.d_A, self.d_B, self.d_R)


@dataclass(frozen=True)
class MeasurementFrame:
    """Eigen-data of AB, A, B at both times plus the reservoir Gibbs state."""

    initial: BipartiteState
    final: BipartiteState
    reservoir: ThermalState

    @property
    def shape(self) -> Tuple[int, int, int, int]:
        """(d_AB, d_A, d_B, d_R): the extent of one half of a trajectory index."""
        return (
            self.initial.joint.dim,
            self.initial.d_A,
            self.initial.d_B,
            self.reservoir.dim,
        )

    def at(self, time_label: str) -> BipartiteState:
        if time_label == INITIAL:
            return self.initial
        if time_label == FINAL:
            return self.final
        raise ValueError(f"time must be '{INITIAL}' or '{FINAL}', got {time_label!r}")


@dataclass(frozen=True)
class Trajectory:
    indices: Tuple[int, int, int, int, int, int, int, int]
    p_forward: Optional[float] = None
    p_reverse: Optional[float] = None


@dataclass(frozen=True)
class TrajectoryTable:
    """
    Trajectories stored column-wise.

    indices has one row per trajectory and the eight columns of TRAJECTORY_COLUMNS.
    When support_only is False the rows cover the whole outcome space in
    lexicographic order.
    """

    shape: Tuple[int, int, int, int]
    indices: np.ndarray
    p_forward: np.ndarray
    p_reverse: Optional[np.ndarray] = None
    support_only: bool = False

    def __len__(self) -> int:
        return self.indices.shape[0]

    def trajectory(self, row: int) -> Trajectory:
        p_reverse = None if self.p_reverse is None else float(self.p_reverse[row])
        return Trajectory(
            indices=tuple(int(i) for i in self.indices[row]),
            p_forward=float(self.p_forward[row]),
            p_reverse=p_reverse,
        )

    def __iter__(self) -> Iterator[Trajectory]:
        for row in range(len(self)):
            yield self.trajectory(row)

    def support_mask(self, floor: Optional[float] = None) -> np.ndarray:
        if floor is None:
            floor = get_tolerances().probability_floor
        return self.p_forward > floor

    def with_reverse(self, p_reverse: np.ndarray) -> "TrajectoryTable":
        return TrajectoryTable(
            shape=self.shape,
            indices=self.indices,
            p_forward=self.p_forward,
            p_reverse=freeze(p_reverse),
            support_only=self.support_only,
        )

    def dense(self, values: np.ndarray) -> np.ndarray:
        """Scatter per-row values back onto the full 8-index outcome array."""
        d_ab, d_a, d_b, d_r = self.shape
        full = np.zeros((d_ab, d_a, d_b, d_r) * 2)
        full[tuple(self.indices.T)] = values
        return full


def make_process_spec(
    rho_AB,
    d_A: int,
    d_B: int,
    H_R,
    beta: float,
    U,
    rotation_rng: Optional[np.random.Generator] = None,
) -> ProcessSpec:
    """
    Validate and assemble a ProcessSpec.

    Args:
        rho_AB: Initial joint state of A and B
        d_A: Dimension of A
        d_B: Dimension of B
        H_R: Reservoir Hamiltonian; a 1x1 matrix means no reservoir
        beta: Inverse temperature of the reservoir
        U: Global unitary on A (x) B (x) R
        rotation_rng: Rotates degenerate eigenspaces of the initial states

    Returns:
        ProcessSpec: The validated experiment
    """
    bipartite = make_bipartite(rho_AB, d_A, d_B, rotation_rng=rotation_rng)
    hamiltonian = freeze(as_matrix(H_R, "H_R"))
    reservoir = thermal_state(hamiltonian, beta)
    unitary = freeze(as_matrix(U, "U"))

    total = d_A * d_B * hamiltonian.shape[0]
    if unitary.shape != (total, total):
        raise DimensionMismatch(f"U has shape {unitary.shape}, expected ({total}, {total}) for A(x)B(x)R")
    if not is_unitary(unitary):
        raise NotUnitary("U is not unitary within tolerance")
    return ProcessSpec(bipartite_initial=bipartite, H_R=hamiltonian, beta=float(beta), U=unitary, reservoir=reservoir)


def evolve(spec: ProcessSpec, rotation_rng: Optional[np.random.Generator] = None) -> MeasurementFrame:
    """
    Evolve rho_AB (x) rho_R with U and decompose the reduced final states.

    Args:
        spec: The experiment
        rotation_rng: Rotates degenerate eigenspaces of the final states

    Returns:
        MeasurementFrame: Initial and final eigen-data
    """
    start_time = time.time()
    d_ab, d_r = spec.d_AB, spec.d_R
    global_initial = kron(spec.bipartite_initial.joint.matrix, spec.reservoir.matrix)
    global_final = spec.U @ global_initial @ dagger(spec.U)
    rho_ab_final = partial_trace(global_final, (d_ab, d_r), keep="A")
    final = make_bipartite(rho_ab_final, spec.d_A, spec.d_B, rotation_rng=rotation_rng)
    log_debug(f"evolve: dims={spec.dims} completed in {time.time() - start_time:.4f} seconds")
    return MeasurementFrame(initial=spec.bipartite_initial, final=final, reservoir=spec.reservoir)


def transition_kernel(frame: MeasurementFrame, U: ComplexMatrix) -> np.ndarray:
    """|<m',r'|U|m,r>|^2 as an array indexed [m, r, m', r']."""
    d_ab, _, _, d_r = frame.shape
    reservoir_basis = frame.reservoir.basis
    initial_basis = kron(frame.initial.joint.basis, reservoir_basis)
    final_basis = kron(frame.final.joint.basis, reservoir_basis)
    amplitudes = dagger(final_basis) @ U @ initial_basis
    return (np.abs(amplitudes) ** 2).T.reshape(d_ab, d_r, d_ab, d_r)


def transition_probability(frame: MeasurementFrame, U: ComplexMatrix) -> np.ndarray:
    """p_{m,m';r,r'} = |<m',r'|U|m,r>|^2 p_m p_r, indexed [m, r, m', r']."""
    p_m = frame.initial.joint.probabilities
    p_r = frame.reservoir.probabilities
    kernel = transition_kernel(frame, U)
    return kernel * p_m[:, None, None, None] * p_r[None, :, None, None]


def time_reversed_unitary(U: ComplexMatrix) -> ComplexMatrix:
    # Theta is complex conjugation in the product basis: Theta U^dagger Theta^-1 = U^T
    return np.asarray(U).T.copy()


def reverse_transition_kernel(frame: MeasurementFrame, U: ComplexMatrix) -> np.ndarray:
    """
    |<Theta m, Theta r| U_rev |Theta m', Theta r'>|^2 built from the explicit
    time-reversed unitary, indexed [m, r, m', r'].
    """
    d_ab, _, _, d_r = frame.shape
    reservoir_basis = np.conjugate(frame.reservoir.basis)
    initial_basis = kron(np.conjugate(frame.initial.joint.basis), reservoir_basis)
    final_basis = kron(np.conjugate(frame.final.joint.basis), reservoir_basis)
    amplitudes = dagger(initial_basis) @ time_reversed_unitary(U) @ final_basis
    return (np.abs(amplitudes) ** 2).reshape(d_ab, d_r, d_ab, d_r)


def microreversibility_residual(frame: MeasurementFrame, U: ComplexMatrix) -> float:
    """Largest entrywise gap between the forward kernel and the explicitly reversed one."""
    return float(np.max(np.abs(transition_kernel(frame, U) - reverse_transition_kernel(frame, U))))


def conditional_overlap(frame: MeasurementFrame, time_label: str) -> np.ndarray:
    """|<m|a,b>|^2 at the given time, indexed [m, a, b]."""
    state = frame.at(time_label)
    product_basis = kron(state.marginal_A.basis, state.marginal_B.basis)
    overlaps = dagger(product_basis) @ state.joint.basis
    return (np.abs(overlaps) ** 2).T.reshape(state.joint.dim, state.d_A, state.d_B)


def reversed_order_joint(frame: MeasurementFrame, time_label: str) -> np.ndarray:
    """
    Diagnostic p_{k,l} p_{s|k,l} = <k,l|rho|k,l> |<k,l|s>|^2, indexed [s, k, l].

    Not used by any theorem check; in general it differs from p_s p_{k,l|s}.
    """
    overlap = conditional_overlap(frame, time_label)
    return overlap * product_populations(frame, time_label)[None, :, :]


def product_populations(frame: MeasurementFrame, time_label: str) -> np.ndarray:
    """p_{a,b} = <a,b|rho_AB|a,b> in the marginal eigenbases, indexed [a, b]."""
    state = frame.at(time_label)
    overlap = conditional_overlap(frame, time_label)
    return np.einsum("m,mab->ab", state.joint.probabilities, overlap)


def is_product_eigenbasis(frame: MeasurementFrame, time_label: str, tol: float = 1e-10) -> bool:
    """True when every |<m|a,b>|^2 is 0 or 1, i.e. |m> = |a'',b''>."""
    overlap = conditional_overlap(frame, time_label)
    return bool(np.all(np.minimum(np.abs(overlap), np.abs(overlap - 1.0)) <= tol))


def _blocks(d_ab: int, workers: int) -> List[slice]:
    bounds = np.linspace(0, d_ab, min(workers, d_ab) + 1).astype(int)
    return [slice(int(lo), int(hi)) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]


def _weights_block(
    weights: np.ndarray,
    initial_overlap: np.ndarray,
    final_overlap: np.ndarray,
    block: slice,
) -> np.ndarray:
    # weights is indexed [m, r, m', r']; broadcast to [m, a, b, r, m', a', b', r']
    w = weights[block]
    c_i = initial_overlap[block]
    return (
        w[:, None, None, :, :, None, None, :]
        * c_i[:, :, :, None, None, None, None, None]
        * final_overlap[None, None, None, None, :, :, :, None]
    )


def _assemble(
    frame: MeasurementFrame,
    weights: np.ndarray,
    workers: int,
) -> np.ndarray:
    initial_overlap = conditional_overlap(frame, INITIAL)
    final_overlap = conditional_overlap(frame, FINAL)
    blocks = _blocks(weights.shape[0], workers)
    if len(blocks) == 1:
        return _weights_block(weights, initial_overlap, final_overlap, blocks[0])
    # Each (m) block fills a disjoint slab; concatenation keeps lexicographic order
    with ThreadPoolExecutor(max_workers=len(blocks)) as executor:
        slabs = list(executor.map(
            lambda block: _weights_block(weights, initial_overlap, final_overlap, block),
            blocks,
        ))
    return np.concatenate(slabs, axis=0)


def _table_from_dense(dense: np.ndarray, support_only: bool) -> TrajectoryTable:
    shape = dense.shape[:4]
    flat = dense.reshape(-1)
    if support_only:
        rows = np.flatnonzero(flat > get_tolerances().probability_floor)
    else:
        rows = np.arange(flat.shape[0])
    indices = np.stack(np.unravel_index(rows, dense.shape), axis=1)
    return TrajectoryTable(
        shape=tuple(int(d) for d in shape),
        indices=freeze(indices),
        p_forward=freeze(flat[rows].copy()),
        support_only=support_only,
    )


def forward_distribution(
    spec: ProcessSpec,
    frame: Optional[MeasurementFrame] = None,
    support_only: bool = False,
    workers: Optional[int] = None,
) -> TrajectoryTable:
    """
    p_{m,a,b,m',a',b';r,r'} = p_{m,m';r,r'} |<m|a,b>|^2 |<m'|a',b'>|^2.

    Args:
        spec: The experiment
        frame: Precomputed frame; evolved from spec when omitted
        support_only: Drop trajectories with p_forward at or below the probability floor
        workers: Threads used to fill (m) blocks; results do not depend on it

    Returns:
        TrajectoryTable: Trajectories with p_forward filled
    """
    start_time = time.time()
    if frame is None:
        frame = evolve(spec)
    if workers is None:
        workers = default_workers()

    dense = _assemble(frame, transition_probability(frame, spec.U), workers)
    table = _table_from_dense(dense, support_only)
    if not np.any(table.support_mask()):
        raise SupportEmpty("forward distribution has no trajectory above the probability floor")

    log_debug(
        f"forward_distribution: {len(table)} trajectories, total {table.p_forward.sum():.12f}, "
        f"completed in {time.time() - start_time:.4f} seconds"
    )
    return table


def reverse_distribution(
    spec: ProcessSpec,
    frame: MeasurementFrame,
    forward: TrajectoryTable,
    workers: Optional[int] = None,
) -> TrajectoryTable:
    """
    Reverse-process probabilities on the index set of a forward table.

    The reverse process starts from rho_AB^f and a fresh Gibbs reservoir, and its
    kernel is the forward kernel by microreversibility:
    p~ = |<m',r'|U|m,r>|^2 p_{m'} p~_{r'} |<m'|a',b'>|^2 |<m|a,b>|^2.

    Returns:
        TrajectoryTable: The forward table with p_reverse filled
    """
    start_time = time.time()
    if workers is None:
        workers = default_workers()
    p_m_final = frame.final.joint.probabilities
    p_r = frame.reservoir.probabilities
    weights = transition_kernel(frame, spec.U) * p_m_final[None, None, :, None] * p_r[None, None, None, :]
    dense = _assemble(frame, weights, workers)
    p_reverse = dense[tuple(forward.indices.T)].copy()
    log_debug(f"reverse_distribution: total {p_reverse.sum():.12f}, completed in {time.time() - start_time:.4f} seconds")
    return forward.with_reverse(p_reverse)


def trajectory_distributions(
    spec: ProcessSpec,
    frame: Optional[MeasurementFrame] = None,
    support_only: bool = False,
    workers: Optional[int] = None,
) -> Tuple[MeasurementFrame, TrajectoryTable]:
    """Frame plus one table holding both forward and reverse probabilities."""
    if frame is None:
        frame = evolve(spec)
    forward = forward_distribution(spec, frame, support_only=support_only, workers=workers)
    return frame, reverse_distribution(spec, frame, forward, workers=workers)
