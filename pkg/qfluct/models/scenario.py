import math
from typing import Annotated, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

# A complex entry is written as [re, im]
ComplexEntry = Annotated[List[float], Field(min_length=2, max_length=2)]
MatrixLiteral = List[List[ComplexEntry]]

StateKind = Literal[
    "bell",
    "werner",
    "superposed-toffoli-input",
    "cnot-copy-input",
    "product-mixed",
    "classical-correlated",
    "maximally-mixed",
    "random",
    "literal",
]
UnitaryKind = Literal["identity", "toffoli", "cnot", "swap_BR", "swap_AR", "haar", "permutation", "literal"]
HamiltonianKind = Literal["zero", "qubit", "ladder", "literal-diagonal"]


def encode_matrix(matrix: np.ndarray) -> MatrixLiteral:
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(matrix, dtype=complex)]


def decode_matrix(literal: MatrixLiteral) -> np.ndarray:
    array = np.array(literal, dtype=float)
    if array.ndim != 3 or array.shape[0] != array.shape[1]:
        raise ValueError(f"matrix literal must be square, got entry grid of shape {array.shape[:2]}")
    return array[..., 0] + 1j * array[..., 1]


def _require(spec: BaseModel, *fields: str) -> None:
    missing = [name for name in fields if getattr(spec, name) is None]
    if missing:
        raise ValueError(f"kind '{spec.kind}' requires {', '.join(missing)}")


class StateSpec(BaseModel):
    kind: StateKind
    visibility: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    p_A: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    p_B: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    p_same: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    seed: Optional[int] = None
    rank: Optional[int] = Field(default=None, ge=1)
    matrix: Optional[MatrixLiteral] = None

    @model_validator(mode="after")
    def check_parameters(self):
        required = {
            "werner": ("visibility",),
            "product-mixed": ("p_A", "p_B"),
            "classical-correlated": ("p_same",),
            "random": ("seed", "rank"),
            "literal": ("matrix",),
        }
        _require(self, *required.get(self.kind, ()))
        return self


class UnitarySpec(BaseModel):
    kind: UnitaryKind
    angle: Optional[float] = None
    seed: Optional[int] = None
    matrix: Optional[MatrixLiteral] = None

    @model_validator(mode="after")
    def check_parameters(self):
        required = {
            "swap_BR": ("angle",),
            "swap_AR": ("angle",),
            "haar": ("seed",),
            "permutation": ("seed",),
            "literal": ("matrix",),
        }
        _require(self, *required.get(self.kind, ()))
        return self


class HamiltonianSpec(BaseModel):
    kind: HamiltonianKind
    gap: Optional[float] = None
    spacing: Optional[float] = None
    diagonal: Optional[List[float]] = None

    @model_validator(mode="after")
    def check_parameters(self):
        required = {"qubit": ("gap",), "ladder": ("spacing",), "literal-diagonal": ("diagonal",)}
        _require(self, *required.get(self.kind, ()))
        return self


class ModeSpec(BaseModel):
    kind: Literal["exact", "sample"] = "exact"
    n: Optional[int] = Field(default=None, ge=2)
    seed: Optional[int] = None

    @model_validator(mode="after")
    def check_parameters(self):
        if self.kind == "sample":
            _require(self, "n")
            if self.seed is None:
                self.seed = 0
        return self


class ScenarioConfig(BaseModel):
    """Complete, serialisable definition of one experiment and what to check."""

    name: str = "custom"
    d_A: int = Field(ge=1)
    d_B: int = Field(ge=1)
    d_R: int = Field(default=1, ge=1)
    beta: float = Field(default=1.0, ge=0.0)
    initial_state: StateSpec
    H_R: HamiltonianSpec = Field(default_factory=lambda: HamiltonianSpec(kind="zero"))
    U: UnitarySpec = Field(default_factory=lambda: UnitarySpec(kind="identity"))
    mode: ModeSpec = Field(default_factory=ModeSpec)
    checks: Optional[List[str]] = None  # None selects the default check list
    basis_rotation_seed: Optional[int] = None
    support_only: bool = False

    @field_validator("beta")
    @classmethod
    def beta_finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("beta must be finite")
        return value

    @property
    def total_dim(self) -> int:
        return self.d_A * self.d_B * self.d_R
