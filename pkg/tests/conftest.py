import numpy as np
import pytest

from resilient_se.lti import LtiSystem

# lines reported by test_acceptance.py, printed at the end of the run
ACCEPTANCE_LINES = []


def random_semistable(rng, n, m, z=1, decay=(0.3, 3.0)):
    """``A = S diag(0_z, B) S^-1`` with a random well-conditioned ``S``
    and a random strictly stable ``B``."""
    k = n - z
    M = rng.standard_normal((k, k))
    shift = np.max(np.linalg.eigvals(M).real) + rng.uniform(*decay)
    B = M - shift * np.eye(k)
    S = np.eye(n) + 0.3 * rng.standard_normal((n, n))
    while np.linalg.cond(S) > 50:
        S = np.eye(n) + 0.3 * rng.standard_normal((n, n))
    D = np.zeros((n, n))
    D[z:, z:] = B
    A = S @ D @ np.linalg.inv(S)
    C = rng.standard_normal((m, n))
    return LtiSystem(A, C)


def laplacian_system(rng, n_nodes, m):
    """Damped second-order network; the zero mode comes from the Laplacian."""
    W = np.triu(rng.uniform(0.5, 2.0, (n_nodes, n_nodes)), 1)
    W = W + W.T
    Lap = np.diag(W.sum(1)) - W
    d = rng.uniform(0.5, 1.5, n_nodes)
    # states: [theta; omega]
    A = np.block([[np.zeros((n_nodes, n_nodes)), np.eye(n_nodes)], [-Lap, -np.diag(d)]])
    C = rng.standard_normal((m, 2 * n_nodes))
    return LtiSystem(A, C)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
