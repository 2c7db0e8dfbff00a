import json
import os
from typing import List

import numpy as np
from pydantic import BaseModel, ValidationError

from qfluct.core.errors import ConfigInvalid
from qfluct.models.scenario import ScenarioConfig

TRAJECTORY_HEADER = "m,a,b,r,m',a',b',r',p_forward,p_reverse,ds_A,ds_B,dI,dJ,betaQ"
INDEX_COLUMNS = 8
CONFIG_EXTENSIONS = [".json"]


def _ensure_parent(path: str) -> None:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)


def load_config(path: str) -> ScenarioConfig:
    """
    Read a scenario config from a JSON document.

    Args:
        path: Path of the config file

    Returns:
        ScenarioConfig: The validated config

    Raises:
        ConfigInvalid: if the file is missing, is not JSON, or fails validation
    """
    if not validate_file_type(path, CONFIG_EXTENSIONS):
        raise ConfigInvalid(f"config must be one of {CONFIG_EXTENSIONS}, got '{get_file_extension(path)}'")
    try:
        with open(path, "r") as f:
            raw = json.load(f)
    except FileNotFoundError as e:
        raise ConfigInvalid(f"config file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigInvalid(f"config file {path} is not valid JSON: {e}") from e
    try:
        return ScenarioConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigInvalid(f"config file {path} is invalid:\n{e}") from e


def save_config(config: ScenarioConfig, path: str) -> str:
    _ensure_parent(path)
    with open(path, "w") as f:
        f.write(config.model_dump_json(indent=2, exclude_none=True))
        f.write("\n")
    return path


def write_report(report: BaseModel, path: str) -> str:
    """Write any report model as indented JSON; identical reports give identical bytes."""
    _ensure_parent(path)
    with open(path, "w") as f:
        f.write(report.model_dump_json(indent=2))
        f.write("\n")
    return path


def write_trajectory_dump(rows: np.ndarray, path: str) -> str:
    """
    Write a trajectory dump as CSV.

    Args:
        rows: Matrix from trajectory_rows, one trajectory per row
        path: Destination path

    Returns:
        str: The path written
    """
    _ensure_parent(path)
    fmt: List[str] = ["%d"] * INDEX_COLUMNS + ["%.17g"] * (rows.shape[1] - INDEX_COLUMNS)
    np.savetxt(path, rows, delimiter=",", fmt=fmt, header=TRAJECTORY_HEADER, comments="")
    return path


def read_trajectory_dump(path: str) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def validate_file_type(filename: str, allowed_extensions: List[str]) -> bool:
    return get_file_extension(filename) in allowed_extensions


def get_file_extension(filename: str) -> str:
    _, ext = os.path.splitext(filename)
    return ext.lower()
