import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from coarse2fine.data import Dataset, PartialLabelMatrix, WarmupSet
from coarse2fine.model import Architecture, init_params

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES = {}


def random_arch(rng, max_d=8, max_hidden=8, max_k=4, max_layers=2, activation=None):
    d = int(rng.integers(1, max_d + 1))
    hidden = tuple(int(h) for h in rng.integers(1, max_hidden + 1, size=rng.integers(0, max_layers + 1)))
    k = int(rng.integers(1, max_k + 1))
    act = activation or ("relu", "tanh")[int(rng.integers(0, 2))]
    return Architecture(d, hidden, k, act)


def random_params(rng, arch, scale=1.0):
    theta = init_params(arch, int(rng.integers(0, 2**31)))
    flat = theta.flat * scale + 0.1 * rng.standard_normal(theta.n_params)
    return type(theta)(arch, flat)


def random_problem(rng, arch, n=6, m=4, observed=0.3):
    """Coarse-labelled rows with a random partial matrix plus a warm-up set."""
    K = arch.n_labels
    X = rng.standard_normal((n, arch.input_dim))
    Y = (rng.random((n, K)) < 0.4).astype(float)
    mask = rng.random((n, K)) < observed
    partial = PartialLabelMatrix(np.where(mask, Y, 0.0), mask)
    data = Dataset(X, np.ones((n, 1)), Y.astype(np.int8))
    warm = WarmupSet(rng.standard_normal((m, arch.input_dim)), (rng.random((m, K)) < 0.4).astype(float))
    return data, partial, warm


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
