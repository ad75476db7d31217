import os

import pytest

from app.backend.geometry import Chart
from app.backend.spacetimes import IntervalChart, grw, standard_static
from app.backend.swp import assemble

MANIFEST_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "data", "manifests")

PI = 3.141592653589793


def line(name, coord, lo, hi):
    return Chart.build(name, [coord], ["1"], [(lo, hi)])


@pytest.fixture(scope="session")
def flat_product():
    return assemble(
        "sequential", line("X", "x", -1.0, 2.0), line("Y", "y", -1.0, 2.0), line("Z", "z", -1.0, 2.0),
        "1", "1", name="flat",
    )


@pytest.fixture(scope="session")
def polar_cone():
    return assemble(
        "sequential", line("R", "r", 0.5, 3.0), line("Theta", "theta", -PI, PI), line("Phi", "phi", -PI, PI),
        "r", "r", name="cone",
    )


@pytest.fixture(scope="session")
def round_s3():
    return assemble(
        "sequential", line("Psi", "psi", 0.3, 2.8), line("Theta", "theta", 0.3, 2.8), line("Phi", "phi", -PI, PI),
        "sin(psi)", "sin(psi)*sin(theta)", name="s3",
    )


@pytest.fixture(scope="session")
def static_spacetime():
    return standard_static(
        IntervalChart((-1.0, 1.0)), line("X", "x", 1.0, 2.0), line("Y", "y", -PI, PI), "x", "x",
    )


@pytest.fixture(scope="session")
def desitter_slab():
    return grw(IntervalChart((0.1, 1.0)), "exp(t)", line("X", "x", -1.0, 1.0), line("Y", "y", -1.0, 1.0), "1")


@pytest.fixture(scope="session")
def tower():
    plane = Chart.build("Plane", ["u", "v"], [["1", "0"], ["0", "1"]], [(0.5, 1.5), (0.5, 1.5)])
    return assemble("iterated", line("X", "x", -1.0, 2.0), plane, line("Z", "z", -1.0, 2.0), "exp(x/2)", f2="1 + u*v")


@pytest.fixture(scope="session")
def unit_s2():
    return Chart.build("S2", ["theta", "phi"], ["1", "sin(theta)^2"], [(0.1, 3.0), (-PI, PI)])


@pytest.fixture(scope="session")
def polar_plane():
    return Chart.build("Polar", ["r", "theta"], ["1", "r^2"], [(0.5, 3.0), (-PI, PI)])


@pytest.fixture
def manifest_path():
    def _path(name):
        return os.path.join(MANIFEST_DIR, name)

    return _path
