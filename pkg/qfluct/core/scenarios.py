"""
Scenario orchestration: builds a ProcessSpec from a ScenarioConfig, runs it in
exact or sampled mode, and drives the random-instance sweeps.
"""
import math
import time
from dataclasses import dataclass
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np

from qfluct import __version__
from qfluct.core.config import get_tolerances
from qfluct.core.errors import ConfigInvalid, QFluctError
from qfluct.core.fluctuation import (
    CHECKS,
    DEFAULT_CHECKS,
    analyse,
    average_identity_residuals,
    entropy_table,
    increment_arrays,
)
from qfluct.core.protocol import (
    FINAL,
    INITIAL,
    MeasurementFrame,
    ProcessSpec,
    TrajectoryTable,
    evolve,
    make_process_spec,
    product_populations,
    trajectory_distributions,
)
from qfluct.core.sampler import build_sampling_tables, sample_quantities, summarize_samples
from qfluct.core.states import (
    classical_mutual_information,
    quantum_mutual_information,
    random_density,
    random_unitary,
)
from qfluct.db.preset_store import get_preset_store
from qfluct.models.report import CheckResult, EnsembleReport, SweepRow, SweepSummary, TrajectoryRecord
from qfluct.models.scenario import HamiltonianSpec, ScenarioConfig, StateSpec, UnitarySpec
from qfluct.utils.log_utils import log_debug

# Checks that make sense on a Monte Carlo estimate
SAMPLED_CHECKS = ["ift", "inequality"]
SAMPLED_QUANTITIES = ["ift", "ds_A", "ds_B", "dI", "dJ", "betaQ", "sigma"]
STANDARD_ERROR_WINDOW = 5.0

SWEEP_CHECKS = ["normalization", "ift", "crooks", "inequality", "kl_identity", "average_identities"]
CLASSICAL_SWEEP_CHECKS = SWEEP_CHECKS + ["classical_reduction"]
SWEEP_ENERGY_SCALE = 2.0

SweepFamily = Literal["haar", "classical"]


@dataclass(frozen=True)
class ScenarioRun:
    """Everything produced by one run; table is None in sampled mode."""

    spec: ProcessSpec
    frame: MeasurementFrame
    table: Optional[TrajectoryTable]
    report: EnsembleReport


def _rotation_rng(config: ScenarioConfig) -> Optional[np.random.Generator]:
    if config.basis_rotation_seed is None:
        return None
    return np.random.default_rng(config.basis_rotation_seed)


def build_process_spec(config: ScenarioConfig) -> Tuple[ProcessSpec, MeasurementFrame]:
    """
    Expand the presets of a config and evolve the resulting experiment.

    Raises:
        ConfigInvalid: if a preset is unknown or the matrices do not form a valid experiment
    """
    store = get_preset_store()
    rotation_rng = _rotation_rng(config)
    try:
        spec = make_process_spec(
            store.build_state(config),
            config.d_A,
            config.d_B,
            store.build_hamiltonian(config),
            config.beta,
            store.build_unitary(config),
            rotation_rng=rotation_rng,
        )
        frame = evolve(spec, rotation_rng=rotation_rng)
    except ConfigInvalid:
        raise
    except (QFluctError, ValueError) as e:
        raise ConfigInvalid(f"scenario '{config.name}': {e}") from e
    return spec, frame


def _selected_checks(config: ScenarioConfig) -> List[str]:
    checks = DEFAULT_CHECKS if config.checks is None else config.checks
    unknown = [name for name in checks if name not in CHECKS]
    if unknown:
        raise ConfigInvalid(f"unknown checks {unknown}; choose from {sorted(CHECKS)}")
    return list(checks)


def _provenance(config: ScenarioConfig, **extra) -> Dict:
    # No timestamps or worker counts: identical configs give byte-identical reports
    provenance = {
        "qfluct_version": __version__,
        "scenario": config.name,
        "dims": [config.d_A, config.d_B, config.d_R],
        "beta": config.beta,
        "tolerance_profile": get_tolerances().profile,
        "basis_rotation_seed": config.basis_rotation_seed,
    }
    provenance.update(extra)
    return provenance


def _sampled_report(
    config: ScenarioConfig,
    spec: ProcessSpec,
    frame: MeasurementFrame,
    checks: List[str],
    workers: Optional[int],
) -> EnsembleReport:
    n, seed = config.mode.n, config.mode.seed
    tables = build_sampling_tables(spec, frame)
    values = sample_quantities(spec, SAMPLED_QUANTITIES, n, seed, workers=workers, tables=tables)
    estimates = {name: summarize_samples(values[name]) for name in SAMPLED_QUANTITIES}
    theorem = get_tolerances().theorem

    report = EnsembleReport(
        scenario=config.name,
        mode="sampled",
        ift_value=estimates["ift"].mean,
        avg_ds_A=estimates["ds_A"].mean,
        avg_ds_B=estimates["ds_B"].mean,
        avg_dI=estimates["dI"].mean,
        avg_dJ=estimates["dJ"].mean,
        avg_betaQ=estimates["betaQ"].mean,
        inequality_slack=estimates["sigma"].mean,
        support_size=int(np.count_nonzero(tables.probabilities > get_tolerances().probability_floor)),
        entropies=entropy_table(frame),
        quantum_mi_initial=quantum_mutual_information(frame.initial),
        quantum_mi_final=quantum_mutual_information(frame.final),
        classical_mi_initial=classical_mutual_information(product_populations(frame, INITIAL)),
        classical_mi_final=classical_mutual_information(product_populations(frame, FINAL)),
        standard_errors={name: estimate.std_error for name, estimate in estimates.items()},
        provenance=_provenance(
            config,
            mode="sample",
            n_samples=n,
            seed=seed,
            skipped_checks=[name for name in checks if name not in SAMPLED_CHECKS],
        ),
    )

    results = []
    if "ift" in checks:
        tolerance = max(STANDARD_ERROR_WINDOW * estimates["ift"].std_error, theorem)
        results.append(CheckResult(
            name="ift",
            residual=abs(report.ift_value - 1.0),
            tolerance=tolerance,
            passed=abs(report.ift_value - 1.0) <= tolerance,
            detail=f"{STANDARD_ERROR_WINDOW:g} standard-error window",
        ))
    if "inequality" in checks:
        tolerance = max(STANDARD_ERROR_WINDOW * estimates["sigma"].std_error, theorem)
        residual = max(0.0, -report.inequality_slack)
        results.append(CheckResult(
            name="inequality", residual=residual, tolerance=tolerance, passed=residual <= tolerance,
            detail=f"{STANDARD_ERROR_WINDOW:g} standard-error window",
        ))
    report.checks = results
    return report


def run_scenario_detailed(config: ScenarioConfig, workers: Optional[int] = None) -> ScenarioRun:
    """Run a scenario and keep the spec, frame and trajectory table next to the report."""
    start_time = time.time()
    log_debug(f"run_scenario: starting '{config.name}' in {config.mode.kind} mode")
    checks = _selected_checks(config)
    spec, frame = build_process_spec(config)

    if config.mode.kind == "sample":
        report = _sampled_report(config, spec, frame, checks, workers)
        table = None
    else:
        frame, table = trajectory_distributions(spec, frame, support_only=config.support_only, workers=workers)
        report = analyse(
            spec, frame, table,
            checks=checks,
            scenario=config.name,
            provenance=_provenance(config, mode="exact", support_only=config.support_only),
        )

    log_debug(
        f"run_scenario: '{config.name}' passed={report.passed} "
        f"completed in {time.time() - start_time:.2f} seconds"
    )
    return ScenarioRun(spec=spec, frame=frame, table=table, report=report)


def run_scenario(
    config: ScenarioConfig,
    workers: Optional[int] = None,
    raise_on_failure: bool = False,
) -> EnsembleReport:
    """
    Execute evolve, distributions and the configured checks for one scenario.

    Args:
        config: The scenario
        workers: Threads for distribution building and sampling; results do not depend on it
        raise_on_failure: Raise CheckFailed for the first failing check instead of returning

    Returns:
        EnsembleReport: Averages, theorem values and check results

    Raises:
        ConfigInvalid: for unknown presets or checks and invalid matrices
        CheckFailed: when raise_on_failure is set and a check exceeds its tolerance
    """
    report = run_scenario_detailed(config, workers=workers).report
    if raise_on_failure:
        report.raise_for_failures()
    return report


def trajectory_rows(frame: MeasurementFrame, table: TrajectoryTable) -> np.ndarray:
    """
    Dump matrix with columns m,a,b,r,m',a',b',r',p_forward,p_reverse,ds_A,ds_B,dI,dJ,betaQ.

    Rows follow the table's lexicographic order; increments are NaN off the support.
    """
    n = len(table)
    increments = np.full((n, 5), np.nan)
    mask = table.support_mask()
    inc = increment_arrays(table.indices[mask], frame)
    increments[mask] = np.column_stack([inc.ds_A, inc.ds_B, inc.dI, inc.dJ, inc.betaQ])
    p_reverse = table.p_reverse if table.p_reverse is not None else np.full(n, np.nan)
    return np.column_stack([table.indices.astype(float), table.p_forward, p_reverse, increments])


def trajectory_records(frame: MeasurementFrame, table: TrajectoryTable) -> List[TrajectoryRecord]:
    records = []
    for row in trajectory_rows(frame, table):
        indices = [int(i) for i in row[:8]]
        records.append(TrajectoryRecord(
            m=indices[0], a=indices[1], b=indices[2], r=indices[3],
            m_f=indices[4], a_f=indices[5], b_f=indices[6], r_f=indices[7],
            p_forward=row[8], p_reverse=row[9],
            ds_A=row[10], ds_B=row[11], dI=row[12], dJ=row[13], betaQ=row[14],
        ))
    return records


# -- property sweeps ---------------------------------------------------------------

def _random_instance(
    rng: np.random.Generator,
    dims: Tuple[int, int, int],
    beta: float,
    rank: Optional[int],
    family: SweepFamily,
) -> Tuple[ProcessSpec, int]:
    d_A, d_B, d_R = dims
    d_ab = d_A * d_B
    if rank is None:
        rank = int(rng.integers(1, d_ab + 1))
    energies = np.sort(rng.uniform(0.0, SWEEP_ENERGY_SCALE, d_R)) if d_R > 1 else np.zeros(1)

    if family == "classical":
        # Diagonal state and a permutation of the product basis keep both eigenbases product
        populations = np.zeros(d_ab)
        populations[rng.choice(d_ab, size=rank, replace=False)] = rng.dirichlet(np.ones(rank))
        rho = np.diag(populations).astype(complex)
        perm = rng.permutation(d_ab * d_R)
        U = np.zeros((d_ab * d_R, d_ab * d_R), dtype=complex)
        U[perm, np.arange(d_ab * d_R)] = 1.0
    else:
        rho = random_density(d_ab, rank, rng).matrix
        U = random_unitary(d_ab * d_R, rng)
    return make_process_spec(rho, d_A, d_B, np.diag(energies), beta, U), rank


def _sweep_row(instance: int, seed: int, beta: float, rank: int, report: EnsembleReport, frame) -> SweepRow:
    identities = average_identity_residuals(report, frame)
    return SweepRow(
        instance=instance,
        seed=seed,
        beta=beta,
        rank=rank,
        ift_value=report.ift_value,
        reverse_mass_off_support=report.reverse_mass_off_support,
        ift_residual=abs(report.ift_value + report.reverse_mass_off_support - 1.0),
        crooks_max_relative_residual=report.crooks_max_relative_residual,
        inequality_slack=report.inequality_slack,
        kl_divergence=report.kl_divergence,
        kl_residual=abs(report.inequality_slack - report.kl_divergence),
        average_identity_residual=max(identities.values()),
        passed=report.passed,
    )


def sweep(
    n_instances: int,
    dims: Sequence[int],
    betas: Sequence[float],
    seed: int,
    rank: Optional[int] = None,
    workers: Optional[int] = None,
    family: SweepFamily = "haar",
) -> SweepSummary:
    """
    Exact-enumeration property sweep over random instances.

    Instance i draws from the i-th SeedSequence child of seed and uses
    betas[i % len(betas)]. The "haar" family uses Ginibre states and Haar
    unitaries; the "classical" family uses diagonal states and product-basis
    permutations and additionally runs the classical-reduction check.

    Args:
        n_instances: Number of instances, at least 1
        dims: (d_A, d_B, d_R)
        betas: Inverse temperatures cycled over the instances
        seed: Root seed
        rank: Rank of the initial state; drawn uniformly per instance when omitted
        workers: Threads for distribution building
        family: "haar" or "classical"

    Returns:
        SweepSummary: Per-instance rows and worst-case residuals
    """
    if n_instances < 1:
        raise ConfigInvalid(f"n_instances must be at least 1, got {n_instances}")
    if len(dims) != 3 or any(int(d) < 1 for d in dims):
        raise ConfigInvalid(f"dims must be three positive integers, got {list(dims)}")
    if not betas or any(not math.isfinite(b) or b < 0 for b in betas):
        raise ConfigInvalid(f"betas must be finite and non-negative, got {list(betas)}")
    if family not in ("haar", "classical"):
        raise ConfigInvalid(f"unknown sweep family '{family}'")
    dims = tuple(int(d) for d in dims)
    if rank is not None and not 1 <= rank <= dims[0] * dims[1]:
        raise ConfigInvalid(f"rank must satisfy 1 <= rank <= {dims[0] * dims[1]}, got {rank}")

    start_time = time.time()
    checks = CLASSICAL_SWEEP_CHECKS if family == "classical" else SWEEP_CHECKS
    children = np.random.SeedSequence(seed).spawn(n_instances)
    rows = []
    for i, child in enumerate(children):
        instance_seed = int(child.generate_state(1)[0])
        beta = float(betas[i % len(betas)])
        spec, instance_rank = _random_instance(np.random.default_rng(child), dims, beta, rank, family)
        frame, table = trajectory_distributions(spec, workers=workers)
        report = analyse(spec, frame, table, checks=checks, scenario=f"sweep-{i}")
        rows.append(_sweep_row(i, instance_seed, beta, instance_rank, report, frame))

    summary = SweepSummary(
        n_instances=n_instances,
        dims=list(dims),
        betas=[float(b) for b in betas],
        seed=seed,
        rows=rows,
        max_ift_residual=max(row.ift_residual for row in rows),
        max_crooks_residual=max(row.crooks_max_relative_residual for row in rows),
        min_inequality_slack=min(row.inequality_slack for row in rows),
        max_kl_residual=max(row.kl_residual for row in rows),
        max_average_identity_residual=max(row.average_identity_residual for row in rows),
        passed=all(row.passed for row in rows),
    )
    log_debug(
        f"sweep: {n_instances} instances at dims={dims} max_ift_residual={summary.max_ift_residual:.2e} "
        f"completed in {time.time() - start_time:.2f} seconds"
    )
    return summary


# -- Landauer witness ----------------------------------------------------------------

@dataclass(frozen=True)
class WitnessRow:
    angle: float
    bound: float  # <ds_A> - <dI>
    beta_heat: float  # beta <Q>
    slack: float


def landauer_witness_search(
    visibility: float,
    beta: float,
    angles: Sequence[float],
    gap: float = 1.0,
) -> Tuple[List[WitnessRow], Optional[float]]:
    """
    Scan A<->R partial-swap angles on a Werner memory coupled to a cold qubit reservoir.

    Returns:
        The scanned rows and the first angle whose quantum bound <ds_A> - <dI> is
        negative while beta<Q> stays below it, or None when no angle qualifies.
    """
    tolerance = get_tolerances().theorem
    rows = []
    witness = None
    for angle in angles:
        config = ScenarioConfig(
            name="landauer-witness",
            d_A=2, d_B=2, d_R=2, beta=beta,
            initial_state=StateSpec(kind="werner", visibility=visibility),
            H_R=HamiltonianSpec(kind="qubit", gap=gap),
            U=UnitarySpec(kind="swap_AR", angle=float(angle)),
            checks=[],
        )
        report = run_scenario(config)
        bound = report.avg_ds_A - report.avg_dI
        row = WitnessRow(angle=float(angle), bound=bound, beta_heat=report.avg_betaQ, slack=bound - report.avg_betaQ)
        rows.append(row)
        if witness is None and row.bound < -tolerance and row.slack >= -tolerance:
            witness = row.angle
    log_debug(f"landauer_witness_search: {len(rows)} angles, witness angle {witness}")
    return rows, witness
