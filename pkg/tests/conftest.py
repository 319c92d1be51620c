import numpy as np
import pytest

from xjump.spin_model import SpinSystem, random_couplings

# Zeeman splitting large against the couplings, so magnetization bands are
# separated by gaps wider than BAND_HALF_WIDTH and each band is a stable shell.
OMEGA = 20.0
BAND_HALF_WIDTH = 10.0


def dipolar_system(n, seed=7, omega=OMEGA, scale=1.0):
    return SpinSystem(n, [omega] * n, random_couplings(n, scale, seed), "secular-dipolar")


def random_system(n, seed, form="heisenberg-xxx"):
    rng = np.random.default_rng(seed)
    return SpinSystem(n, rng.uniform(0.5, 2.0, n), random_couplings(n, 1.0, seed + 1), form)


@pytest.fixture
def rng():
    return np.random.default_rng(20261018)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
