import numpy as np
import pytest

from cdforest import Dataset, ForestHyperparameters, fit
from cdforest.simbench import ToyModelConfig, sample_toy


@pytest.fixture
def step_dataset():
    """Four points on a line with a jump between x=1 and x=2."""
    return Dataset(np.array([[0.0], [1.0], [2.0], [3.0]]), np.array([0.0, 0.0, 10.0, 10.0]))


@pytest.fixture(scope="session")
def toy_small():
    return sample_toy(ToyModelConfig(seed=3), 200)


@pytest.fixture(scope="session")
def toy_forest(toy_small):
    return fit(toy_small, ForestHyperparameters(n_trees=10, min_samples_leaf=5, seed=11), n_jobs=1)


def random_instance(rng, n_max=50, d_max=3, k_max=5):
    """Random small dataset and forest settings."""
    n = int(rng.integers(2, n_max + 1))
    d = int(rng.integers(1, d_max + 1))
    X = rng.normal(size=(n, d))
    if rng.random() < 0.3:
        X = np.round(X, 1)  # force duplicated feature values
    y = X @ rng.normal(size=d) + rng.normal(size=n)
    hp = ForestHyperparameters(
        n_trees=int(rng.integers(1, k_max + 1)),
        max_features=int(rng.integers(1, d + 1)),
        min_samples_leaf=int(rng.integers(1, max(2, n // 4) + 1)),
        seed=int(rng.integers(0, 2**31)),
    )
    return Dataset(X, y), hp


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    """Record one verdict line per acceptance criterion."""

    def record(criterion, ok, detail):
        ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
