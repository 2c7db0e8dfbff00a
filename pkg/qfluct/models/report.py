from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, Field

from qfluct.core.errors import CheckFailed


class CheckResult(BaseModel):
    name: str
    residual: float
    tolerance: float
    passed: bool
    detail: Optional[str] = None


class SampleEstimate(BaseModel):
    mean: float
    std_error: float = Field(ge=0.0)
    n_samples: int = Field(ge=1)


class EnsembleReport(BaseModel):
    scenario: str = "custom"
    mode: Literal["exact", "sampled"] = "exact"
    ift_value: float
    avg_ds_A: float
    avg_ds_B: float
    avg_dI: float
    avg_dJ: float
    avg_betaQ: float
    inequality_slack: float
    kl_divergence: Optional[float] = None  # exact mode only
    crooks_max_relative_residual: Optional[float] = None
    crooks_classical_max_relative_residual: Optional[float] = None  # product-eigenbasis specs only
    detailed_integral_value: Optional[float] = None  # sum of p_reverse over the forward support
    reverse_mass_off_support: float = 0.0
    support_size: int
    entropies: Dict[str, float] = {}
    quantum_mi_initial: float = 0.0
    quantum_mi_final: float = 0.0
    classical_mi_initial: float = 0.0
    classical_mi_final: float = 0.0
    standard_errors: Optional[Dict[str, float]] = None  # sampled mode only
    checks: List[CheckResult] = []
    provenance: Dict[str, Any] = {}

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def failed_checks(self) -> List[CheckResult]:
        return [check for check in self.checks if not check.passed]

    def raise_for_failures(self) -> None:
        """Raise CheckFailed for the first failing check."""
        for check in self.failed_checks():
            raise CheckFailed(check.name, check.residual, check.tolerance)


class TrajectoryRecord(BaseModel):
    """One row of a trajectory dump."""

    m: int
    a: int
    b: int
    r: int
    m_f: int
    a_f: int
    b_f: int
    r_f: int
    p_forward: float
    p_reverse: float
    ds_A: float
    ds_B: float
    dI: float
    dJ: float
    betaQ: float


class SweepRow(BaseModel):
    instance: int
    seed: int
    beta: float
    rank: int
    ift_value: float
    reverse_mass_off_support: float
    ift_residual: float
    crooks_max_relative_residual: float
    inequality_slack: float
    kl_divergence: float
    kl_residual: float
    average_identity_residual: float
    passed: bool


class SweepSummary(BaseModel):
    n_instances: int
    dims: List[int]
    betas: List[float]
    seed: int
    rows: List[SweepRow]
    max_ift_residual: float
    max_crooks_residual: float
    min_inequality_slack: float
    max_kl_residual: float
    max_average_identity_residual: float
    passed: bool
