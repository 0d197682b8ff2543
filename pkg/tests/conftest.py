import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hypodecay import fp_core

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large])
settings.load_profile("default")

ACCEPTANCE_LINES = []

CHAIN = np.array([[1.0, -1.0, 0.0], [1.0, 0.0, -1.0], [0.0, 1.0, 0.0]])


def random_condition_a(rng, d, rank=None):
    """Random normalized drift ``C = S + A`` with ``S >= 0`` of the given rank and Condition A."""
    rank = int(rng.integers(1, d + 1)) if rank is None else rank
    while True:
        G = rng.standard_normal((d, rank))
        S = G @ G.T / rank
        W = rng.standard_normal((d, d))
        C = S + 0.5 * (W - W.T)
        if fp_core.check_condition_a(C).passed and fp_core.spectral_gap(C).mu > 1e-2:
            return C


def random_raw_problem(rng, d, rank=None):
    """Random positive stable ``Ctilde`` with a PSD ``Dtilde`` satisfying the raw condition.

    Draws whose controllability margin (relative smallest eigenvalue of
    ``sum_{j<d} Ctilde^j Dtilde Ctilde^T^j``) is below ``MARGIN`` are rejected:
    there the index is not decidable in double precision.
    """
    rank = int(rng.integers(1, d + 1)) if rank is None else rank
    while True:
        R = rng.standard_normal((d, d))
        shift = max(0.0, -np.min(np.linalg.eigvals(R).real)) + rng.uniform(0.2, 1.0)
        Ct = R + shift * np.eye(d)
        G = rng.standard_normal((d, rank))
        Dt = G @ G.T / rank
        if controllability_margin(Ct, Dt) >= MARGIN:
            return fp_core.FpProblem(Ct, Dt)


MARGIN = 1e-6


def controllability_margin(Ct, Dt):
    d = Ct.shape[0]
    T, P = Dt.copy(), np.eye(d)
    for _ in range(d - 1):
        P = Ct @ P
        T = T + P @ Dt @ P.T
    w = np.linalg.eigvalsh(0.5 * (T + T.T))
    return w[0] / w[-1]


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
