import os
from typing import Optional

from dotenv import load_dotenv
from pydantic import BaseModel

from qfluct.core.errors import ConfigInvalid

# Load environment variables
load_dotenv()

TOLERANCE_ENV = "QFLUCT_TOL"
WORKERS_ENV = "QFLUCT_WORKERS"


class Tolerances(BaseModel):
    """Every numerical tolerance used by the package, in one place."""

    profile: str = "default"
    hermiticity: float = 1e-12
    reconstruction: float = 1e-10
    trace: float = 1e-10
    negative_eigenvalue: float = 1e-10
    probability_floor: float = 1e-14
    unitarity: float = 1e-10
    normalization: float = 1e-9
    theorem: float = 1e-9
    degeneracy_gap: float = 1e-10
    kernel: float = 1e-12

    model_config = {"frozen": True}


PROFILES = {
    "default": Tolerances(),
    "strict": Tolerances(profile="strict", normalization=1e-11, theorem=1e-11, unitarity=1e-12),
}

# Singleton instance
_tolerances: Optional[Tolerances] = None


def get_tolerances() -> Tolerances:
    """Get the tolerance profile selected by QFLUCT_TOL."""
    global _tolerances
    if _tolerances is None:
        name = os.environ.get(TOLERANCE_ENV, "default").strip().lower() or "default"
        if name not in PROFILES:
            raise ConfigInvalid(f"{TOLERANCE_ENV} must be one of {sorted(PROFILES)}, got '{name}'")
        _tolerances = PROFILES[name]
    return _tolerances


def reset_tolerances() -> None:
    global _tolerances
    _tolerances = None


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        workers = int(raw)
    except ValueError:
        raise ConfigInvalid(f"{WORKERS_ENV} must be an integer, got '{raw}'")
    if workers < 1:
        raise ConfigInvalid(f"{WORKERS_ENV} must be at least 1, got {workers}")
    return workers
