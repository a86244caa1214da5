import numpy as np
import pytest

from blochtomo import qstate
from blochtomo.drive import DriveSet, QubitDrive


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_drives(n, rng, lam_range=(0.5, 2.0)):
    """Generic drives with random amplitude, detuning sign and phase."""
    out = []
    for _ in range(n):
        g = rng.uniform(0.3, 2.0)
        nu = rng.uniform(0.2, 1.5) * rng.choice([-1.0, 1.0])
        out.append(QubitDrive(g, nu, rng.uniform(-np.pi, np.pi)))
    return DriveSet(tuple(out))


def random_rho(n, rng, rank=None):
    d = 2**n
    rank = d if rank is None else rank
    x = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = x @ x.conj().T
    return rho / np.trace(rho).real


@pytest.fixture
def mixed2(rng):
    return random_rho(2, rng)


def pure(n, index=0):
    return qstate.basis_state(n, index)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(results):
        terminalreporter.write_line(results[k])
