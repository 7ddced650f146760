import numpy as np
import pytest

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]])
SZ = np.diag([1.0, -1.0]).astype(complex)


def random_hermitian(d, rng, scale=1.0):
    A = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return scale * (A + A.conj().T) / 2


def random_density(d, rng, floor=0.05):
    """Full-rank state with eigenvalues bounded away from zero."""
    A = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = A @ A.conj().T
    rho = rho / np.trace(rho).real
    rho = (1 - floor * d) * rho + floor * np.eye(d)
    return rho


def random_operator(d, rng):
    return rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))


@pytest.fixture
def rng():
    return np.random.default_rng(20260415)


# one line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
