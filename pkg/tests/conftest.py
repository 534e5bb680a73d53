import numpy as np
import pytest

from smctune.models import Gaussian, TemperedTarget


def gaussian_target(d=1, prior_var=1.0, lik_mean=None, lik_var=None):
    """N(0, prior_var I) prior with an optional N(lik_mean, lik_var I) likelihood."""
    prior = Gaussian(np.zeros(d), prior_var * np.eye(d))
    if lik_mean is None:
        zero = lambda x: np.zeros(x.shape[0])
        zgrad = lambda x: np.zeros_like(x)
        return TemperedTarget(d, prior.logpdf, zero, prior.grad, zgrad, prior.sample, "normal")
    lik = Gaussian(np.broadcast_to(lik_mean, (d,)), lik_var * np.eye(d))
    return TemperedTarget(d, prior.logpdf, lik.logpdf, prior.grad, lik.grad, prior.sample, "normal")


@pytest.fixture
def std_normal():
    return gaussian_target(1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(str(v) for v in r) + "\n")
    return path


# one line per acceptance criterion, printed at the end of the session
VERDICTS = []


def verdict(number, ok, detail):
    VERDICTS.append((number, bool(ok), detail))
    assert ok, f"criterion {number}: {detail}"


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, detail in sorted(VERDICTS, key=lambda v: v[0]):
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
