"""Shared fixtures: scenarios and success-probability tables built once per session."""

import numpy as np
import pytest

from risbandit.engine import prepare_table
from risbandit.scenario import builtin_scenario_path, load_scenario


@pytest.fixture(scope="session")
def fig3_scenario():
    return load_scenario(builtin_scenario_path("fig3"))


@pytest.fixture(scope="session")
def cluster_scenario():
    return load_scenario(builtin_scenario_path("fig9_cluster"))


@pytest.fixture(scope="session")
def fig3_table(fig3_scenario):
    # 20k Monte Carlo draws keep unit tests fast; the acceptance suite
    # builds its own 1e5-draw table where the criteria demand it.
    return prepare_table(fig3_scenario, trials=20_000, seed=7)


@pytest.fixture(scope="session")
def cluster_table(cluster_scenario):
    return prepare_table(cluster_scenario, trials=20_000, seed=7)


@pytest.fixture()
def rng():
    """Fresh, fixed-seed generator per test so draws never leak between tests."""
    return np.random.default_rng(12345)
