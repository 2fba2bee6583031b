import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from lintransfer.core import Dataset, TaskTag, fit_ols
from lintransfer.gain import TaskTruth

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

_ACCEPTANCE_KEY = pytest.StashKey[list]()


def random_spd(rng, d, cond=10.0):
    """SPD matrix with eigenvalues spread log-uniformly over ``[1, cond]`` and a random basis."""
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    lam = np.exp(rng.uniform(0.0, np.log(cond), d))
    return (Q * lam) @ Q.T


def simulate_task(rng, beta, n, sigma2, X=None):
    d = beta.shape[0]
    if X is None:
        X = rng.standard_normal((n, d))
    y = X @ beta + rng.normal(0.0, np.sqrt(sigma2), X.shape[0])
    return X, y


class Instance:
    """A random source/target pair with its truth and OLS fits."""

    def __init__(self, rng, d=3, n_s=40, n_t=15, gap=0.3, sigma2_S=1.0, sigma2_T=1.0):
        beta_T = rng.standard_normal(d)
        direction = rng.standard_normal(d)
        beta_S = beta_T - gap * direction / np.linalg.norm(direction)
        self.truth = TaskTruth(beta_S, beta_T, sigma2_S, sigma2_T)
        X_S, y_S = simulate_task(rng, beta_S, n_s, sigma2_S)
        X_T, y_T = simulate_task(rng, beta_T, n_t, sigma2_T)
        self.source = Dataset(X_S, y_S, TaskTag.SOURCE)
        self.target = Dataset(X_T, y_T, TaskTag.TARGET)
        self.fit_S = fit_ols(self.source)
        self.fit_T = fit_ols(self.target)
        self.d = d


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def instance(rng):
    return Instance(rng)


@pytest.fixture
def acceptance(request):
    """Record one pass/fail line per acceptance criterion for the terminal summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE_KEY, [])

    def record(number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        lines.append((number, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(lines, key=lambda t: t[0]):
        terminalreporter.write_line(line)
