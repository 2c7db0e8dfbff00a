import math
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from qfluct.core.errors import ConfigInvalid
from qfluct.core.linalg import kron, kron_all
from qfluct.core.states import random_density, random_unitary
from qfluct.models.scenario import (
    HamiltonianSpec,
    ModeSpec,
    ScenarioConfig,
    StateSpec,
    UnitarySpec,
    decode_matrix,
    encode_matrix,
)

StateBuilder = Callable[[StateSpec, int, int], np.ndarray]
UnitaryBuilder = Callable[[UnitarySpec, int, int, int], np.ndarray]
HamiltonianBuilder = Callable[[HamiltonianSpec, int], np.ndarray]


def _require_dims(kind: str, actual: Tuple[int, ...], expected: Tuple[int, ...], labels: str) -> None:
    if actual != expected:
        raise ConfigInvalid(f"preset '{kind}' needs ({labels}) = {expected}, got {actual}")


def _projector(vector: np.ndarray) -> np.ndarray:
    vector = np.asarray(vector, dtype=complex)
    return np.outer(vector, np.conjugate(vector))


def _skewed_populations(p_first: float, d: int) -> np.ndarray:
    if d == 1:
        return np.ones(1)
    return np.concatenate([[p_first], np.full(d - 1, (1.0 - p_first) / (d - 1))])


def factor_swap(dims: Tuple[int, ...], i: int, j: int) -> np.ndarray:
    """Permutation matrix exchanging tensor factors i and j (which must have equal dimension)."""
    if dims[i] != dims[j]:
        raise ConfigInvalid(f"cannot swap factors of dimension {dims[i]} and {dims[j]}")
    n = int(np.prod(dims))
    source = np.arange(n)
    digits = list(np.unravel_index(source, dims))
    digits[i], digits[j] = digits[j], digits[i]
    target = np.ravel_multi_index(tuple(digits), dims)
    swap = np.zeros((n, n), dtype=complex)
    swap[target, source] = 1.0
    return swap


def partial_swap(swap: np.ndarray, angle: float) -> np.ndarray:
    # exp(-i angle S) for an involution S
    return math.cos(angle) * np.eye(swap.shape[0]) - 1j * math.sin(angle) * swap


# -- states on A (x) B ---------------------------------------------------------

def _bell(spec: StateSpec, d_A: int, d_B: int) -> np.ndarray:
    _require_dims(spec.kind, (d_A, d_B), (2, 2), "d_A, d_B")
    return _projector(np.array([1, 0, 0, 1]) / math.sqrt(2))


def _werner(spec: StateSpec, d_A: int, d_B: int) -> np.ndarray:
    v = spec.visibility
    return v * _bell(spec, d_A, d_B) + (1.0 - v) * np.eye(4) / 4.0


def _toffoli_input(spec: StateSpec, d_A: int, d_B: int) -> np.ndarray:
    # |++> on the two input bits, |0> on the output bit
    _require_dims(spec.kind, (d_A, d_B), (4, 2), "d_A, d_B")
    return _projector(np.kron(np.full(4, 0.5), [1, 0]))


def _cnot_input(spec: StateSpec, d_A: int, d_B: int) -> np.ndarray:
    _require_dims(spec.kind, (d_A, d_B), (2, 2), "d_A, d_B")
    return _projector(np.kron(np.array([1, 1]) / math.sqrt(2), [1, 0]))


def _product_mixed(spec: StateSpec, d_A: int, d_B: int) -> np.ndarray:
    return np.diag(np.kron(_skewed_populations(spec.p_A, d_A), _skewed_populations(spec.p_B, d_B))).astype(complex)


def _classical_correlated(spec: StateSpec, d_A: int, d_B: int) -> np.ndarray:
    if d_A != d_B:
        raise ConfigInvalid(f"preset '{spec.kind}' needs d_A == d_B, got {d_A} and {d_B}")
    d = d_A
    populations = np.full((d, d), 0.0 if d == 1 else (1.0 - spec.p_same) / (d * (d - 1)))
    np.fill_diagonal(populations, spec.p_same / d if d > 1 else 1.0)
    return np.diag(populations.ravel()).astype(complex)


def _maximally_mixed(spec: StateSpec, d_A: int, d_B: int) -> np.ndarray:
    return np.eye(d_A * d_B, dtype=complex) / (d_A * d_B)


def _random_state(spec: StateSpec, d_A: int, d_B: int) -> np.ndarray:
    if spec.rank > d_A * d_B:
        raise ConfigInvalid(f"rank {spec.rank} exceeds d_A * d_B = {d_A * d_B}")
    return np.array(random_density(d_A * d_B, spec.rank, spec.seed).matrix)


def _literal_state(spec: StateSpec, d_A: int, d_B: int) -> np.ndarray:
    matrix = decode_matrix(spec.matrix)
    _require_dims(spec.kind, matrix.shape, (d_A * d_B, d_A * d_B), "rows, cols")
    return matrix


# -- unitaries on A (x) B (x) R ------------------------------------------------

def _identity(spec: UnitarySpec, d_A: int, d_B: int, d_R: int) -> np.ndarray:
    return np.eye(d_A * d_B * d_R, dtype=complex)


def _toffoli(spec: UnitarySpec, d_A: int, d_B: int, d_R: int) -> np.ndarray:
    # Flips the output bit when both input bits are 1: |110> <-> |111>
    _require_dims(spec.kind, (d_A, d_B, d_R), (4, 2, 1), "d_A, d_B, d_R")
    gate = np.eye(8, dtype=complex)
    gate[[6, 7]] = gate[[7, 6]]
    return gate


def _cnot(spec: UnitarySpec, d_A: int, d_B: int, d_R: int) -> np.ndarray:
    _require_dims(spec.kind, (d_A, d_B), (2, 2), "d_A, d_B")
    gate = np.eye(4, dtype=complex)
    gate[[2, 3]] = gate[[3, 2]]
    return kron(gate, np.eye(d_R))


def _swap_BR(spec: UnitarySpec, d_A: int, d_B: int, d_R: int) -> np.ndarray:
    swap = factor_swap((d_B, d_R), 0, 1)
    return kron_all([np.eye(d_A), partial_swap(swap, spec.angle)])


def _swap_AR(spec: UnitarySpec, d_A: int, d_B: int, d_R: int) -> np.ndarray:
    return partial_swap(factor_swap((d_A, d_B, d_R), 0, 2), spec.angle)


def _haar(spec: UnitarySpec, d_A: int, d_B: int, d_R: int) -> np.ndarray:
    return random_unitary(d_A * d_B * d_R, spec.seed)


def _permutation(spec: UnitarySpec, d_A: int, d_B: int, d_R: int) -> np.ndarray:
    n = d_A * d_B * d_R
    perm = np.random.default_rng(spec.seed).permutation(n)
    gate = np.zeros((n, n), dtype=complex)
    gate[perm, np.arange(n)] = 1.0
    return gate


def _literal_unitary(spec: UnitarySpec, d_A: int, d_B: int, d_R: int) -> np.ndarray:
    matrix = decode_matrix(spec.matrix)
    n = d_A * d_B * d_R
    _require_dims(spec.kind, matrix.shape, (n, n), "rows, cols")
    return matrix


# -- reservoir Hamiltonians ------------------------------------------------------

def _zero(spec: HamiltonianSpec, d_R: int) -> np.ndarray:
    return np.zeros((d_R, d_R), dtype=complex)


def _qubit(spec: HamiltonianSpec, d_R: int) -> np.ndarray:
    _require_dims(spec.kind, (d_R,), (2,), "d_R")
    return np.diag([0.0, spec.gap]).astype(complex)


def _ladder(spec: HamiltonianSpec, d_R: int) -> np.ndarray:
    return np.diag(np.arange(d_R) * spec.spacing).astype(complex)


def _literal_diagonal(spec: HamiltonianSpec, d_R: int) -> np.ndarray:
    _require_dims(spec.kind, (len(spec.diagonal),), (d_R,), "len(diagonal)")
    return np.diag(spec.diagonal).astype(complex)


def _scenario(name: str, **fields) -> ScenarioConfig:
    return ScenarioConfig(name=name, **fields)


class PresetStore:
    def __init__(self):
        self.states: Dict[str, Tuple[StateBuilder, str]] = {}
        self.unitaries: Dict[str, Tuple[UnitaryBuilder, str]] = {}
        self.hamiltonians: Dict[str, Tuple[HamiltonianBuilder, str]] = {}
        self.scenarios: Dict[str, Tuple[ScenarioConfig, str]] = {}

    def add_state(self, kind: str, builder: StateBuilder, description: str) -> None:
        self.states[kind] = (builder, description)

    def add_unitary(self, kind: str, builder: UnitaryBuilder, description: str) -> None:
        self.unitaries[kind] = (builder, description)

    def add_hamiltonian(self, kind: str, builder: HamiltonianBuilder, description: str) -> None:
        self.hamiltonians[kind] = (builder, description)

    def add_scenario(self, config: ScenarioConfig, description: str) -> None:
        self.scenarios[config.name] = (config, description)

    def get_scenario(self, name: str) -> Optional[ScenarioConfig]:
        """Get a copy of a built-in scenario by name."""
        entry = self.scenarios.get(name)
        return entry[0].model_copy(deep=True) if entry else None

    def get_all_scenarios(self) -> List[ScenarioConfig]:
        return [config.model_copy(deep=True) for config, _ in self.scenarios.values()]

    def build_state(self, config: ScenarioConfig) -> np.ndarray:
        builder, _ = self._lookup(self.states, config.initial_state.kind, "state")
        return builder(config.initial_state, config.d_A, config.d_B)

    def build_unitary(self, config: ScenarioConfig) -> np.ndarray:
        builder, _ = self._lookup(self.unitaries, config.U.kind, "unitary")
        return builder(config.U, config.d_A, config.d_B, config.d_R)

    def build_hamiltonian(self, config: ScenarioConfig) -> np.ndarray:
        builder, _ = self._lookup(self.hamiltonians, config.H_R.kind, "Hamiltonian")
        return builder(config.H_R, config.d_R)

    def expand(self, config: ScenarioConfig) -> ScenarioConfig:
        """Replace every preset by its literal matrix so the config no longer depends on presets."""
        hamiltonian = np.real(np.diag(self.build_hamiltonian(config)))
        return config.model_copy(update={
            "initial_state": StateSpec(kind="literal", matrix=encode_matrix(self.build_state(config))),
            "U": UnitarySpec(kind="literal", matrix=encode_matrix(self.build_unitary(config))),
            "H_R": HamiltonianSpec(kind="literal-diagonal", diagonal=[float(e) for e in hamiltonian]),
        })

    def list_presets(self) -> Dict[str, List[Tuple[str, str]]]:
        return {
            "scenarios": [(name, description) for name, (_, description) in self.scenarios.items()],
            "states": [(name, description) for name, (_, description) in self.states.items()],
            "unitaries": [(name, description) for name, (_, description) in self.unitaries.items()],
            "hamiltonians": [(name, description) for name, (_, description) in self.hamiltonians.items()],
        }

    @staticmethod
    def _lookup(registry: Dict, kind: str, label: str):
        if kind not in registry:
            raise ConfigInvalid(f"unknown {label} preset '{kind}'")
        return registry[kind]


def _register_defaults(store: PresetStore) -> None:
    store.add_state("bell", _bell, "two-qubit Bell state |Phi+>")
    store.add_state("werner", _werner, "Bell state mixed with white noise; needs visibility")
    store.add_state("superposed-toffoli-input", _toffoli_input, "|++> inputs (A, d=4) with output bit |0> (B)")
    store.add_state("cnot-copy-input", _cnot_input, "|+> on A, |0> on B")
    store.add_state("product-mixed", _product_mixed, "diagonal product state; needs p_A, p_B")
    store.add_state("classical-correlated", _classical_correlated, "diagonal state with P(a == b) = p_same")
    store.add_state("maximally-mixed", _maximally_mixed, "I / (d_A d_B)")
    store.add_state("random", _random_state, "Ginibre random state; needs seed, rank")
    store.add_state("literal", _literal_state, "explicit matrix of [re, im] pairs")

    store.add_unitary("identity", _identity, "no evolution")
    store.add_unitary("toffoli", _toffoli, "Toffoli gate on (A = 2 input bits, B = output bit), d_R = 1")
    store.add_unitary("cnot", _cnot, "CNOT with A as control and B as target, identity on R")
    store.add_unitary("swap_BR", _swap_BR, "cos(angle) I - i sin(angle) SWAP between B and R")
    store.add_unitary("swap_AR", _swap_AR, "cos(angle) I - i sin(angle) SWAP between A and R")
    store.add_unitary("haar", _haar, "Haar-random unitary on A(x)B(x)R; needs seed")
    store.add_unitary("permutation", _permutation, "random permutation of the product basis; needs seed")
    store.add_unitary("literal", _literal_unitary, "explicit matrix of [re, im] pairs")

    store.add_hamiltonian("zero", _zero, "H_R = 0")
    store.add_hamiltonian("qubit", _qubit, "diag(0, gap)")
    store.add_hamiltonian("ladder", _ladder, "E_r = r * spacing")
    store.add_hamiltonian("literal-diagonal", _literal_diagonal, "explicit energies")

    store.add_scenario(_scenario(
        "toffoli", d_A=4, d_B=2, d_R=1, beta=1.0,
        initial_state=StateSpec(kind="superposed-toffoli-input"),
        U=UnitarySpec(kind="toffoli"),
        checks=["normalization", "ift", "detailed_integral", "crooks", "inequality", "kl_identity",
                "average_identities", "microreversibility"],
    ), "reversible Toffoli computation without a reservoir")
    store.add_scenario(_scenario(
        "cnot-copy", d_A=2, d_B=2, d_R=1, beta=1.0,
        initial_state=StateSpec(kind="cnot-copy-input"),
        U=UnitarySpec(kind="cnot"),
    ), "reversible copy |+>|0> -> Bell state")
    store.add_scenario(_scenario(
        "identity", d_A=2, d_B=2, d_R=2, beta=1.0,
        initial_state=StateSpec(kind="product-mixed", p_A=0.7, p_B=0.4),
        H_R=HamiltonianSpec(kind="qubit", gap=1.0),
        U=UnitarySpec(kind="identity"),
    ), "stationary product state, no evolution")
    store.add_scenario(_scenario(
        "haar-random", d_A=2, d_B=2, d_R=2, beta=1.0,
        initial_state=StateSpec(kind="random", seed=7, rank=4),
        H_R=HamiltonianSpec(kind="qubit", gap=1.0),
        U=UnitarySpec(kind="haar", seed=11),
        checks=["normalization", "ift", "detailed_integral", "crooks", "inequality", "kl_identity",
                "average_identities", "microreversibility"],
    ), "random full-rank state under a Haar unitary")
    store.add_scenario(_scenario(
        "landauer-classical", d_A=2, d_B=2, d_R=2, beta=3.0,
        initial_state=StateSpec(kind="classical-correlated", p_same=0.9),
        H_R=HamiltonianSpec(kind="qubit", gap=1.0),
        U=UnitarySpec(kind="swap_AR", angle=math.pi / 2),
        checks=["normalization", "ift", "crooks", "inequality", "classical_reduction", "landauer_classical"],
    ), "erasure of a classically correlated memory A into a cold reservoir")
    store.add_scenario(_scenario(
        "landauer-quantum", d_A=2, d_B=2, d_R=2, beta=3.0,
        initial_state=StateSpec(kind="werner", visibility=0.5),
        H_R=HamiltonianSpec(kind="qubit", gap=1.0),
        U=UnitarySpec(kind="swap_AR", angle=math.pi / 2),
        checks=["normalization", "ift", "crooks", "inequality", "kl_identity", "landauer_quantum"],
    ), "erasure of a quantum-correlated memory A; the heat bound is negative")
    store.add_scenario(_scenario(
        "degenerate", d_A=2, d_B=2, d_R=2, beta=0.5,
        initial_state=StateSpec(kind="product-mixed", p_A=0.5, p_B=0.7),
        H_R=HamiltonianSpec(kind="qubit", gap=1.0),
        U=UnitarySpec(kind="haar", seed=3),
    ), "doubly degenerate joint spectrum under a Haar unitary")
    store.add_scenario(_scenario(
        "haar-sampled", d_A=2, d_B=2, d_R=2, beta=1.0,
        initial_state=StateSpec(kind="random", seed=7, rank=4),
        H_R=HamiltonianSpec(kind="qubit", gap=1.0),
        U=UnitarySpec(kind="haar", seed=11),
        mode=ModeSpec(kind="sample", n=100_000, seed=2024),
    ), "haar-random estimated by Monte Carlo sampling")


# Singleton instance for dependency injection
_preset_store = None


def get_preset_store() -> PresetStore:
    """Get the preset store singleton instance."""
    global _preset_store
    if _preset_store is None:
        _preset_store = PresetStore()
        _register_defaults(_preset_store)
    return _preset_store
