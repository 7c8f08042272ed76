import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from lpjohn.bodies import Polytope, random_symmetric_polytope
from lpjohn.functions import gaussian
from lpjohn.validation import smooth_max_function

settings.register_profile("default", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def square():
    return Polytope.cube(2)


@pytest.fixture(scope="session")
def hexagon():
    return Polytope.regular(6)


@pytest.fixture(scope="session")
def randpoly():
    return random_symmetric_polytope(2, 5, np.random.default_rng(2024))


@pytest.fixture(scope="session")
def triangle():
    return Polytope([[1.0, 0.0], [-0.5, 0.9], [-0.6, -0.8]])


@pytest.fixture(scope="session")
def smooth_max():
    return smooth_max_function()


@pytest.fixture(scope="session")
def gamma2():
    return gaussian(np.eye(2))


def c_n(n):
    return (2 * math.pi) ** (n / 2)


# ------------------------------------------------ acceptance summary lines

_ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """``record(label, ok, detail)`` prints and stores one pass/fail line."""
    lines = request.config.stash.setdefault(_ACCEPTANCE_KEY, [])

    def record(label, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'}  {label}" + (f"  [{detail}]" if detail else "")
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("C", 1)[1].split(" ")[0])):
            terminalreporter.write_line(line)
