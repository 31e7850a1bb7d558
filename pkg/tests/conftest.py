import json
import math
import sys
from importlib import resources
from pathlib import Path

import pytest

from idae.cli import load
from idae.expressions import jet
from idae.pipeline import parse_point

GRAVITY = 9.81


def bundled(name: str) -> Path:
    return Path(str(resources.files("idae") / "systems" / name))


def bundled_points(name: str, system):
    raw = json.loads(bundled(name).read_text())
    return [parse_point(p, system.names) for p in raw]


EX32_SOURCE = """
system ex32 {
  time t from 0;
  var x, y;
  eq y - der(x,2) = 0;
  eq int((t-s)*(y/2 - der(x,2))*y) = 0;
}
"""


@pytest.fixture(scope="session")
def zolf():
    return load("zolf.idae")


@pytest.fixture(scope="session")
def degenerate():
    return load("nonlinear-degenerate.idae")


@pytest.fixture(scope="session")
def pendulum():
    return load("pendulum.idae")


@pytest.fixture(scope="session")
def drive1():
    return load("drive1.idae")


@pytest.fixture(scope="session")
def drive2():
    return load("drive2.idae")


@pytest.fixture
def zolf_point():
    # x1 + x2 = t and x1 x2 = -3 hold on every solution
    r = math.sqrt(3)
    return {jet(0): r, jet(1): -r}


@pytest.fixture
def degenerate_point():
    # on x = 3 - cos(t), y = x^2 at t0 = 0
    return {jet(0): 2.0, jet(0, 1): 0.0, jet(0, 2): 1.0, jet(1): 4.0, jet(1, 1): 0.0, jet(1, 2): 4.0}


def pendulum_point_values():
    x3 = math.atan(1 / GRAVITY)
    x2 = 0.8
    x1 = math.sqrt(1 - x2 ** 2 * math.sin(x3) ** 2)
    return {jet(0): x1, jet(1): x2, jet(2): x3, jet(3): 0.0, jet(4): 0.0,
            jet(0, 1): 0.0, jet(1, 1): 0.0, jet(2, 1): 0.0,
            jet(3, 1): x1 * x2 * math.cos(x3), jet(4, 1): 0.0}


@pytest.fixture
def pendulum_point():
    return pendulum_point_values()


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    verdicts = getattr(module, "VERDICTS", None)
    if verdicts:
        terminalreporter.section("acceptance criteria")
        for n in sorted(verdicts):
            terminalreporter.write_line(verdicts[n])
