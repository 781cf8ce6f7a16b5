import numpy as np
import pytest

from koopvamp.covariance import CovarianceTriple
from koopvamp.systems import build_double_gyre_truth, build_onedim_truth

CHAIN2 = np.array([[0.9, 0.1], [0.2, 0.8]])
CHAIN3 = np.array([[0.8, 0.15, 0.05], [0.1, 0.7, 0.2], [0.05, 0.25, 0.7]])

# acceptance outcomes collected for the terminal summary
ACCEPTANCE = {}


def exact_chain_covariances(P, mu=None):
    """Exact indicator-basis covariances of a chain started from ``mu`` (stationary by default)."""
    P = np.asarray(P, dtype=float)
    if mu is None:
        evals, evecs = np.linalg.eig(P.T)
        mu = np.real(evecs[:, np.argmin(np.abs(evals - 1))])
        mu = mu / mu.sum()
    c00 = np.diag(mu)
    c01 = c00 @ P
    c11 = np.diag(mu @ P)
    return CovarianceTriple(c00, c01, c11, 0, 1), mu


@pytest.fixture(scope="session")
def onedim_truth():
    return build_onedim_truth()


@pytest.fixture(scope="session")
def gyre_truth():
    return build_double_gyre_truth()


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
