import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=25,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


def random_unitary(rng, n, batch=()):
    z = rng.normal(size=batch + (n, n)) + 1j * rng.normal(size=batch + (n, n))
    q, r = np.linalg.qr(z)
    d = np.diagonal(r, axis1=-2, axis2=-1)
    return q * (d / np.abs(d))[..., None, :]


def random_hermitian(rng, n, batch=()):
    z = rng.normal(size=batch + (n, n)) + 1j * rng.normal(size=batch + (n, n))
    return 0.5 * (z + np.conj(np.swapaxes(z, -1, -2)))


@pytest.fixture
def rng():
    return np.random.default_rng(20261019)


ACCEPTANCE_LINES = {}


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
