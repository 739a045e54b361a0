import math
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from bicindex import (  # noqa: E402
    Grid,
    ProbeConfig,
    localize_bic,
    make_circle_array,
    make_perturbed_circle,
)
from bicindex.derivs import BicPoint  # noqa: E402

RADIUS = 0.6 * math.pi
EXAMPLE1_K = 0.4414
EXAMPLE2_BETA = 0.2206
EXAMPLE2_K = 0.6173


@pytest.fixture(scope="session")
def circle():
    return make_circle_array(1.0, 10.0, RADIUS)


@pytest.fixture(scope="session")
def side_bump():
    """Bump along -x1: keeps the x2 mirror only."""
    return make_perturbed_circle(1.0, 10.0, RADIUS)


@pytest.fixture(scope="session")
def top_bump():
    """Bump along +x2: keeps the x1 mirror only."""
    return make_perturbed_circle(1.0, 10.0, RADIUS, bump_angle=math.pi / 2)


@pytest.fixture(scope="session")
def grid128():
    return Grid(128, 128, math.pi)


@pytest.fixture(scope="session")
def example2_point(circle, grid128):
    cfg = ProbeConfig(EXAMPLE2_BETA, (), EXAMPLE2_K, 0.004, "IV")
    loc = localize_bic(circle, cfg, grid128, depth=6, polish=8)
    return BicPoint(loc.beta, (0.0,), loc.k)


@pytest.fixture(scope="session")
def example1_point(circle, grid128):
    cfg = ProbeConfig(0.0, (), EXAMPLE1_K, 0.004, "IV")
    loc = localize_bic(circle, cfg, grid128, depth=4, polish=4)
    return BicPoint(loc.beta, (0.0,), loc.k)


def pytest_terminal_summary(terminalreporter):
    lines = {}
    for reports in terminalreporter.stats.values():
        for rep in reports:
            for key, value in getattr(rep, "user_properties", ()):
                if key == "acceptance":
                    lines[rep.nodeid] = value
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(lines.values(), key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
