import math

import numpy as np
import pytest

from cavitymzi.preparation import PrepParams, prepare_ideal

SQRT10 = math.sqrt(10)


@pytest.fixture(scope="session")
def cat_states():
    """Ideal prepared states for alpha = sqrt(10) keyed by U0 t."""
    phases = {"pi/4": math.pi / 4, "pi/2": math.pi / 2, "3pi/4": 3 * math.pi / 4, "pi": math.pi}
    return {k: prepare_ideal(PrepParams(SQRT10, 1.0, v)).light for k, v in phases.items()}


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_ket(rng, dim):
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return v / np.linalg.norm(v)


def random_density(rng, dim, rank=None):
    rank = rank or dim
    X = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = X @ X.conj().T
    return rho / np.trace(rho).real


_ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def report_criterion(request):
    """Record one acceptance line; the lines are printed in the terminal summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE_KEY, [])

    def record(number, passed, detail):
        lines.append((number, f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"))
        return passed
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
