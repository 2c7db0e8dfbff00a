import math

import numpy as np
import pytest

from qfluct.core import config
from qfluct.core.protocol import make_process_spec, trajectory_distributions
from qfluct.core.states import random_density, random_unitary
from qfluct.db.preset_store import get_preset_store

LN2 = math.log(2.0)
# Binary entropy of (3/4, 1/4)
H_QUARTER = math.log(4.0) - 0.75 * math.log(3.0)


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch):
    """Every test starts from the default tolerance profile and no QFLUCT_* overrides."""
    for name in ("QFLUCT_TOL", "QFLUCT_WORKERS", "QFLUCT_DEBUG_LOG"):
        monkeypatch.delenv(name, raising=False)
    config.reset_tolerances()
    yield
    config.reset_tolerances()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_random_spec(seed, d_A=2, d_B=2, d_R=2, beta=1.0, rank=None):
    rng = np.random.default_rng(seed)
    d_ab = d_A * d_B
    if rank is None:
        rank = d_ab
    energies = np.sort(rng.uniform(0.0, 2.0, d_R)) if d_R > 1 else np.zeros(1)
    return make_process_spec(
        random_density(d_ab, rank, rng).matrix,
        d_A,
        d_B,
        np.diag(energies),
        beta,
        random_unitary(d_ab * d_R, rng),
    )


@pytest.fixture
def random_spec():
    """A full-rank 2x2x2 experiment with a Haar unitary."""
    return make_random_spec(2024)


@pytest.fixture
def random_distributions(random_spec):
    frame, table = trajectory_distributions(random_spec)
    return random_spec, frame, table


@pytest.fixture
def preset_store():
    return get_preset_store()


@pytest.fixture
def toffoli_config(preset_store):
    return preset_store.get_scenario("toffoli")


@pytest.fixture
def toffoli_spec(preset_store, toffoli_config):
    return make_process_spec(
        preset_store.build_state(toffoli_config),
        toffoli_config.d_A,
        toffoli_config.d_B,
        preset_store.build_hamiltonian(toffoli_config),
        toffoli_config.beta,
        preset_store.build_unitary(toffoli_config),
    )
