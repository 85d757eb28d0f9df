import numpy as np
import pytest

from hybridboost.data import Dataset


def make_data(n=40, p=3, seed=0, noise=0.3, kind="mixed"):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, p))
    if kind == "mixed":
        y = 1.5 * x[:, 0] + np.where(x[:, 1] > 0, 1.0, -1.0) + noise * rng.normal(size=n)
    elif kind == "linear":
        y = x @ np.linspace(1.0, -0.5, p) + noise * rng.normal(size=n)
    else:
        y = rng.normal(size=n)
    return Dataset(x, y)


@pytest.fixture
def mixed_data():
    return make_data()


@pytest.fixture
def replay_data():
    # 20-row, 2-column fixture shared by the replay and CLI tests
    return make_data(n=20, p=2, seed=11)


# one line per acceptance criterion, printed after the run
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
