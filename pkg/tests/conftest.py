import numpy as np
import pytest

from ivtest import Dataset

ACCEPTANCE_LINES: list[str] = []


def random_small(rng, n_max=12, ks=(2, 3), ds=(2, 3), ties=True):
    """A random dataset with every declared instrument level observed at least once."""
    k = int(rng.choice(ks))
    n_d = int(rng.choice(ds))
    n = int(rng.integers(max(k, n_d), n_max + 1))
    z = np.concatenate([np.arange(k), rng.integers(0, k, n - k)])
    d = np.concatenate([np.arange(n_d), rng.integers(0, n_d, n - n_d)])
    rng.shuffle(d)
    y = rng.integers(0, 5, n).astype(float) if ties else rng.normal(size=n).round(3)
    return Dataset(y=y, d=d, z=z, d_labels=tuple(range(n_d)), z_labels=tuple(range(k)))


@pytest.fixture
def balanced_constant():
    """Constant outcome, D and Z both balanced binary."""
    return Dataset(
        y=np.zeros(4), d=np.array([0, 1, 0, 1]), z=np.array([0, 0, 1, 1]),
        d_labels=(0, 1), z_labels=(0, 1),
    )


@pytest.fixture
def small_corpus():
    rng = np.random.default_rng(20240611)
    return [random_small(rng, ties=bool(i % 2)) for i in range(200)]


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
