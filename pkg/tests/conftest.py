import numpy as np
import pytest

from afsmote.dataset import Dataset, SyntheticSpec, make_gaussian_imbalanced


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def default_synthetic():
    """The default 2-D imbalanced Gaussian problem (n=10000, pi1=0.05)."""
    return make_gaussian_imbalanced(SyntheticSpec())


@pytest.fixture(scope="session")
def small_synthetic():
    return make_gaussian_imbalanced(SyntheticSpec(n=1200, pi1=0.1, seed=7))


@pytest.fixture
def toy_dataset():
    X = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [5.0, 5.0], [6.0, 5.0], [5.0, 6.0], [9.0, 9.0]])
    y = np.array([1, 1, 1, 0, 0, 0, 0])
    return Dataset(X, y)


def pytest_terminal_summary(terminalreporter):
    lines = []
    for key in ("passed", "failed", "skipped"):
        for rep in terminalreporter.stats.get(key, []):
            for name, value in getattr(rep, "user_properties", ()):
                if name == "acceptance":
                    lines.append(value)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(set(lines), key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
