import numpy as np
import pytest

from mampc.lti import LtiModel


def random_stable_model(rng, n, m, l, radius=0.9, with_d=True, dt=1.0):
    """Random discrete model with spectral radius ``radius``."""
    A = rng.standard_normal((n, n))
    A *= radius / max(abs(np.linalg.eigvals(A)))
    B = rng.standard_normal((n, m))
    C = rng.standard_normal((l, n))
    D = rng.standard_normal((l, m)) if with_d else np.zeros((l, m))
    return LtiModel(A, B, C, D, dt)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_acceptance_lines = []


@pytest.fixture
def criterion():
    """Record one pass/fail line per acceptance criterion, then assert it."""
    def report(number, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        _acceptance_lines.append(line)
        print(line)
        assert ok, line
    return report


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_acceptance_lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
