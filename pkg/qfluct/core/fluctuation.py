"""
Stochastic increments along trajectories and the theorem checks built on them:
the integral and detailed fluctuation theorems, the heat inequality, its
relative-entropy form and the Landauer-type bounds.
"""
import time
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Union

import numpy as np

from qfluct.core.config import get_tolerances
from qfluct.core.errors import AssumptionViolated, OffSupport
from qfluct.core.protocol import (
    FINAL,
    INITIAL,
    MeasurementFrame,
    ProcessSpec,
    Trajectory,
    TrajectoryTable,
    conditional_overlap,
    is_product_eigenbasis,
    microreversibility_residual,
    product_populations,
)
from qfluct.core.states import classical_mutual_information, quantum_mutual_information, von_neumann_entropy
from qfluct.models.report import CheckResult, EnsembleReport
from qfluct.utils.log_utils import log_debug

Number = Union[float, np.ndarray]

DEFAULT_CHECKS = [
    "normalization",
    "ift",
    "detailed_integral",
    "crooks",
    "inequality",
    "kl_identity",
    "average_identities",
]
LANDAUER_MODES = ("classical", "quantum")


@dataclass(frozen=True)
class StochasticIncrements:
    """Per-trajectory increments in nats; fields are scalars or aligned arrays."""

    ds_A: Number
    ds_B: Number
    dI: Number
    dJ: Number
    betaQ: Number

    @property
    def exponent(self) -> Number:
        return -self.ds_A - self.ds_B + self.dI + self.betaQ

    @property
    def classical_exponent(self) -> Number:
        return -self.ds_A - self.ds_B + self.dJ + self.betaQ

    @property
    def entropy_production(self) -> Number:
        return self.ds_A + self.ds_B - self.dI - self.betaQ


def _log(values: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(np.asarray(values, dtype=float))


def increment_arrays(indices: np.ndarray, frame: MeasurementFrame) -> StochasticIncrements:
    """
    Increments for every row of an (N, 8) trajectory index array.

    Rows off the support may produce non-finite values; callers mask them.
    """
    m, a, b, r, m_f, a_f, b_f, r_f = (indices[:, k] for k in range(8))

    log_p_m = _log(frame.initial.joint.probabilities)
    log_p_a = _log(frame.initial.marginal_A.probabilities)
    log_p_b = _log(frame.initial.marginal_B.probabilities)
    log_p_ab = _log(product_populations(frame, INITIAL))
    log_p_m_f = _log(frame.final.joint.probabilities)
    log_p_a_f = _log(frame.final.marginal_A.probabilities)
    log_p_b_f = _log(frame.final.marginal_B.probabilities)
    log_p_ab_f = _log(product_populations(frame, FINAL))
    energies = frame.reservoir.energies

    with np.errstate(invalid="ignore"):
        ds_A = log_p_a[a] - log_p_a_f[a_f]
        ds_B = log_p_b[b] - log_p_b_f[b_f]
        information_initial = log_p_m[m] - log_p_a[a] - log_p_b[b]
        information_final = log_p_m_f[m_f] - log_p_a_f[a_f] - log_p_b_f[b_f]
        classical_initial = log_p_ab[a, b] - log_p_a[a] - log_p_b[b]
        classical_final = log_p_ab_f[a_f, b_f] - log_p_a_f[a_f] - log_p_b_f[b_f]
    betaQ = frame.reservoir.beta * (energies[r] - energies[r_f])

    return StochasticIncrements(
        ds_A=ds_A,
        ds_B=ds_B,
        dI=information_final - information_initial,
        dJ=classical_final - classical_initial,
        betaQ=betaQ,
    )


def increments(traj: Trajectory, frame: MeasurementFrame) -> StochasticIncrements:
    """Increments of a single supported trajectory."""
    if traj.p_forward is None or traj.p_forward <= get_tolerances().probability_floor:
        raise OffSupport(f"trajectory {traj.indices} is not on the forward support")
    arrays = increment_arrays(np.array([traj.indices]), frame)
    return StochasticIncrements(
        ds_A=float(arrays.ds_A[0]),
        ds_B=float(arrays.ds_B[0]),
        dI=float(arrays.dI[0]),
        dJ=float(arrays.dJ[0]),
        betaQ=float(arrays.betaQ[0]),
    )


@dataclass(frozen=True)
class SupportView:
    """Forward/reverse probabilities and increments restricted to the support."""

    p_forward: np.ndarray
    p_reverse: np.ndarray
    increments: StochasticIncrements
    reverse_mass_off_support: float

    @property
    def size(self) -> int:
        return self.p_forward.shape[0]

    def average(self, values: np.ndarray) -> float:
        return float(np.sum(self.p_forward * values))


def support_view(table: TrajectoryTable, frame: MeasurementFrame) -> SupportView:
    if table.p_reverse is None:
        raise ValueError("trajectory table has no reverse probabilities")
    mask = table.support_mask()
    p_reverse = table.p_reverse[mask]
    if table.support_only:
        off_support = max(0.0, 1.0 - float(np.sum(p_reverse)))
    else:
        off_support = float(np.sum(table.p_reverse[~mask]))
    return SupportView(
        p_forward=table.p_forward[mask],
        p_reverse=p_reverse,
        increments=increment_arrays(table.indices[mask], frame),
        reverse_mass_off_support=off_support,
    )


def integral_ft(table: TrajectoryTable, frame: MeasurementFrame) -> float:
    """<e^{-ds_A - ds_B + dI + betaQ}> over the forward distribution."""
    view = support_view(table, frame)
    return view.average(np.exp(view.increments.exponent))


def crooks_check(table: TrajectoryTable, frame: MeasurementFrame, classical: bool = False) -> float:
    """
    Largest relative gap between p~/p and e^{-ds_A - ds_B + dI + betaQ} on the support.

    With classical=True the exponent uses dJ in place of dI.
    """
    view = support_view(table, frame)
    return _crooks_residual(view, classical)


def _crooks_residual(view: SupportView, classical: bool = False) -> float:
    ratio = view.p_reverse / view.p_forward
    exponent = view.increments.classical_exponent if classical else view.increments.exponent
    residual = np.abs(ratio - np.exp(exponent)) / ratio
    return float(np.max(residual)) if residual.size else 0.0


def kl_divergence(table: TrajectoryTable, frame: MeasurementFrame) -> float:
    """Relative entropy sum p ln(p / p~) over the forward support."""
    view = support_view(table, frame)
    return _kl(view)


def _kl(view: SupportView) -> float:
    return float(np.sum(view.p_forward * (np.log(view.p_forward) - np.log(view.p_reverse))))


def inequality_check(report: EnsembleReport) -> float:
    """Slack of beta<Q> <= <ds_A> + <ds_B> - <dI>; non-negative when the inequality holds."""
    return report.avg_ds_A + report.avg_ds_B - report.avg_dI - report.avg_betaQ


def landauer_check(report: EnsembleReport, mode: str) -> float:
    """
    Slack of the Landauer-type bound for an unchanged observer B.

    classical: beta<Q> <= <ds_A> - <dJ>
    quantum:   beta<Q> <= <ds_A> - <dI>

    Raises:
        AssumptionViolated: if <ds_B> is not zero within the theorem tolerance
    """
    if mode not in LANDAUER_MODES:
        raise ValueError(f"mode must be one of {LANDAUER_MODES}, got {mode!r}")
    tolerance = get_tolerances().theorem
    if abs(report.avg_ds_B) > tolerance:
        raise AssumptionViolated(f"<ds_B> = {report.avg_ds_B:.3e}; the observer B must be unchanged")
    correlation = report.avg_dJ if mode == "classical" else report.avg_dI
    return report.avg_ds_A - correlation - report.avg_betaQ


def average_information_content(frame: MeasurementFrame, time_label: str) -> float:
    """sum_{s,k,l} p_s |<s|k,l>|^2 ln[p_s / (p_k p_l)]."""
    state = frame.at(time_label)
    weights = state.joint.probabilities[:, None, None] * conditional_overlap(frame, time_label)
    mask = weights > get_tolerances().probability_floor
    log_p_s = _log(state.joint.probabilities)[:, None, None]
    log_p_k = _log(state.marginal_A.probabilities)[None, :, None]
    log_p_l = _log(state.marginal_B.probabilities)[None, None, :]
    with np.errstate(invalid="ignore"):
        content = np.broadcast_to(log_p_s - log_p_k - log_p_l, weights.shape)
    return float(np.sum(weights[mask] * content[mask]))


def entropy_table(frame: MeasurementFrame) -> Dict[str, float]:
    return {
        "S_AB_initial": von_neumann_entropy(frame.initial.joint),
        "S_A_initial": von_neumann_entropy(frame.initial.marginal_A),
        "S_B_initial": von_neumann_entropy(frame.initial.marginal_B),
        "S_AB_final": von_neumann_entropy(frame.final.joint),
        "S_A_final": von_neumann_entropy(frame.final.marginal_A),
        "S_B_final": von_neumann_entropy(frame.final.marginal_B),
        "S_R": von_neumann_entropy(frame.reservoir),
    }


def average_identity_residuals(report: EnsembleReport, frame: MeasurementFrame) -> Dict[str, float]:
    """Gaps between trajectory averages and the density-operator functionals they estimate."""
    entropies = report.entropies
    return {
        "ds_A": abs(report.avg_ds_A - (entropies["S_A_final"] - entropies["S_A_initial"])),
        "ds_B": abs(report.avg_ds_B - (entropies["S_B_final"] - entropies["S_B_initial"])),
        "dI": abs(report.avg_dI - (report.quantum_mi_final - report.quantum_mi_initial)),
        "I_initial": abs(average_information_content(frame, INITIAL) - report.quantum_mi_initial),
        "I_final": abs(average_information_content(frame, FINAL) - report.quantum_mi_final),
    }


@dataclass
class CheckContext:
    spec: ProcessSpec
    frame: MeasurementFrame
    table: TrajectoryTable
    view: SupportView
    report: EnsembleReport


def _result(name: str, residual: float, tolerance: float, detail: Optional[str] = None) -> CheckResult:
    return CheckResult(name=name, residual=residual, tolerance=tolerance, passed=bool(residual <= tolerance), detail=detail)


def _check_normalization(ctx: CheckContext) -> CheckResult:
    tolerance = get_tolerances().normalization
    forward_gap = abs(float(np.sum(ctx.table.p_forward)) - 1.0)
    if ctx.table.support_only:
        return _result("normalization", forward_gap, tolerance, "forward only (support-filtered table)")
    reverse_gap = abs(float(np.sum(ctx.table.p_reverse)) - 1.0)
    return _result("normalization", max(forward_gap, reverse_gap), tolerance)


def _check_ift(ctx: CheckContext) -> CheckResult:
    report = ctx.report
    residual = abs(report.ift_value + report.reverse_mass_off_support - 1.0)
    detail = None
    if report.reverse_mass_off_support > get_tolerances().theorem:
        detail = f"reverse mass off the forward support: {report.reverse_mass_off_support:.6e}"
    return _result("ift", residual, get_tolerances().theorem, detail)


def _check_detailed_integral(ctx: CheckContext) -> CheckResult:
    residual = abs(ctx.report.ift_value - ctx.report.detailed_integral_value)
    return _result("detailed_integral", residual, get_tolerances().theorem / 10.0)


def _check_crooks(ctx: CheckContext) -> CheckResult:
    return _result("crooks", ctx.report.crooks_max_relative_residual, get_tolerances().theorem)


def _check_inequality(ctx: CheckContext) -> CheckResult:
    return _result("inequality", max(0.0, -inequality_check(ctx.report)), get_tolerances().theorem)


def _check_kl_identity(ctx: CheckContext) -> CheckResult:
    residual = abs(inequality_check(ctx.report) - ctx.report.kl_divergence)
    if ctx.report.kl_divergence < -get_tolerances().reconstruction:
        residual = max(residual, -ctx.report.kl_divergence)
    return _result("kl_identity", residual, get_tolerances().theorem)


def _check_average_identities(ctx: CheckContext) -> CheckResult:
    residuals = average_identity_residuals(ctx.report, ctx.frame)
    worst = max(residuals, key=residuals.get)
    return _result("average_identities", residuals[worst], get_tolerances().theorem, f"worst: {worst}")


def _check_microreversibility(ctx: CheckContext) -> CheckResult:
    residual = microreversibility_residual(ctx.frame, ctx.spec.U)
    return _result("microreversibility", residual, get_tolerances().kernel)


def _check_classical_reduction(ctx: CheckContext) -> CheckResult:
    tolerance = get_tolerances().theorem
    if not (is_product_eigenbasis(ctx.frame, INITIAL) and is_product_eigenbasis(ctx.frame, FINAL)):
        return CheckResult(
            name="classical_reduction", residual=float("inf"), tolerance=tolerance, passed=False,
            detail="joint eigenbasis is not a product basis at both times",
        )
    view = ctx.view
    information_gap = float(np.max(np.abs(view.increments.dI - view.increments.dJ)))
    classical_ift = view.average(np.exp(view.increments.classical_exponent))
    ift_gap = abs(classical_ift + view.reverse_mass_off_support - 1.0)
    residual = max(information_gap, ift_gap, _crooks_residual(view, classical=True))
    return _result("classical_reduction", residual, tolerance)


def _landauer_checker(mode: str) -> Callable[[CheckContext], CheckResult]:
    name = f"landauer_{mode}"

    def check(ctx: CheckContext) -> CheckResult:
        tolerance = get_tolerances().theorem
        try:
            slack = landauer_check(ctx.report, mode)
        except AssumptionViolated as e:
            return CheckResult(name=name, residual=float("inf"), tolerance=tolerance, passed=False, detail=str(e))
        correlation = ctx.report.avg_dJ if mode == "classical" else ctx.report.avg_dI
        bound = ctx.report.avg_ds_A - correlation
        return _result(name, max(0.0, -slack), tolerance, f"bound {bound:.6e}, slack {slack:.6e}")

    return check


CHECKS: Dict[str, Callable[[CheckContext], CheckResult]] = {
    "normalization": _check_normalization,
    "ift": _check_ift,
    "detailed_integral": _check_detailed_integral,
    "crooks": _check_crooks,
    "inequality": _check_inequality,
    "kl_identity": _check_kl_identity,
    "average_identities": _check_average_identities,
    "microreversibility": _check_microreversibility,
    "classical_reduction": _check_classical_reduction,
    "landauer_classical": _landauer_checker("classical"),
    "landauer_quantum": _landauer_checker("quantum"),
}


def analyse(
    spec: ProcessSpec,
    frame: MeasurementFrame,
    table: TrajectoryTable,
    checks: Optional[List[str]] = None,
    scenario: str = "custom",
    provenance: Optional[Dict] = None,
) -> EnsembleReport:
    """
    Exact-enumeration report: averages, theorem values and the requested checks.

    Args:
        spec: The experiment
        frame: Its measurement frame
        table: Trajectory table with forward and reverse probabilities
        checks: Names from CHECKS; DEFAULT_CHECKS when omitted
        scenario: Name recorded in the report
        provenance: Extra metadata recorded in the report

    Returns:
        EnsembleReport: The filled report
    """
    start_time = time.time()
    if checks is None:
        checks = DEFAULT_CHECKS
    unknown = [name for name in checks if name not in CHECKS]
    if unknown:
        raise ValueError(f"unknown checks: {unknown}")

    view = support_view(table, frame)
    inc = view.increments
    product_basis = is_product_eigenbasis(frame, INITIAL) and is_product_eigenbasis(frame, FINAL)

    report = EnsembleReport(
        scenario=scenario,
        mode="exact",
        ift_value=view.average(np.exp(inc.exponent)),
        avg_ds_A=view.average(inc.ds_A),
        avg_ds_B=view.average(inc.ds_B),
        avg_dI=view.average(inc.dI),
        avg_dJ=view.average(inc.dJ),
        avg_betaQ=view.average(inc.betaQ),
        inequality_slack=0.0,
        kl_divergence=_kl(view),
        crooks_max_relative_residual=_crooks_residual(view),
        crooks_classical_max_relative_residual=_crooks_residual(view, classical=True) if product_basis else None,
        detailed_integral_value=float(np.sum(view.p_reverse)),
        reverse_mass_off_support=view.reverse_mass_off_support,
        support_size=view.size,
        entropies=entropy_table(frame),
        quantum_mi_initial=quantum_mutual_information(frame.initial),
        quantum_mi_final=quantum_mutual_information(frame.final),
        classical_mi_initial=classical_mutual_information(product_populations(frame, INITIAL)),
        classical_mi_final=classical_mutual_information(product_populations(frame, FINAL)),
        provenance=dict(provenance or {}),
    )
    report.inequality_slack = inequality_check(report)

    ctx = CheckContext(spec=spec, frame=frame, table=table, view=view, report=report)
    report.checks = [CHECKS[name](ctx) for name in checks]

    log_debug(
        f"analyse: scenario={scenario} support={view.size} ift={report.ift_value:.15f} "
        f"slack={report.inequality_slack:.3e} completed in {time.time() - start_time:.4f} seconds"
    )
    return report
