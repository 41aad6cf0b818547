import numpy as np
import pytest

from pvrf import from_arrays


def random_survival(rng, n, p=3, censor_rate=0.5, ties=False):
    """Exponential event and censoring times with ``p`` normal covariates."""
    X = rng.normal(size=(n, p))
    T = rng.exponential(1.0, n)
    C = rng.exponential(1.0 / censor_rate, n) if censor_rate > 0 else np.full(n, np.inf)
    t = np.minimum(T, C)
    if ties:
        t = np.ceil(t * 4) / 4
    return from_arrays(t, (T <= C).astype(int), X)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
