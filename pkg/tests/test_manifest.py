"""Manifest parsing, validation and the report archive."""

import math
import os
import textwrap

import numpy.testing as npt
import pytest

from app.backend.database import ReportStore
from app.backend.errors import ManifestError
from app.backend.manifest import coordinate_vector, integer, load_manifest, number

CONE = """
version: 1
seed: 3
defaults: {samples: 4}
charts:
  - {name: R, coords: [r], metric: ["1"], box: [[0.5, 3.0]]}
  - {name: Theta, coords: [theta], metric: ["1"], box: [["-pi", "pi"]]}
  - {name: Phi, coords: [phi], metric: ["1"], box: [["-pi", "pi"]]}
constructions:
  - {name: cone, kind: sequential, factors: [R, Theta, Phi], f: "r", fbar: "r"}
fields:
  - {name: rotation, construction: cone, blocks: [null, ["1"], null]}
"""


def write(tmp_path, text, name="m.yaml"):
    path = tmp_path / name
    path.write_text(textwrap.dedent(text), encoding="utf-8")
    return str(path)


def test_number_accepts_constant_expressions():
    assert number("-pi", "box") == -math.pi
    assert number("pi/2", "box") == pytest.approx(math.pi / 2)
    assert number(3, "x") == 3.0
    with pytest.raises(ManifestError):
        number("x + 1", "box")
    with pytest.raises(ManifestError):
        number(True, "box")
    with pytest.raises(ManifestError):
        number("1 +", "box")


def test_integer_rejects_non_integral_values():
    assert integer(7, "samples") == 7
    assert integer(3.0, "samples") == 3
    assert integer("2*3", "samples") == 6
    for bad in ("abc", 2.7, True, None, [1]):
        with pytest.raises(ManifestError):
            integer(bad, "samples")


def test_coordinate_vector_forms():
    coords = ("r", "theta", "phi")
    npt.assert_array_equal(coordinate_vector({"theta": 1}, coords, "v"), [0.0, 1.0, 0.0])
    npt.assert_array_equal(coordinate_vector([1, "pi", 0], coords, "v"), [1.0, math.pi, 0.0])
    with pytest.raises(ManifestError):
        coordinate_vector({"z": 1}, coords, "v")
    with pytest.raises(ManifestError):
        coordinate_vector([1, 2], coords, "v")


@pytest.mark.parametrize("name", ["flat.yaml", "cone.yaml", "sphere.yaml", "static.yaml", "grw.yaml", "full.yaml"])
def test_bundled_manifests_load(manifest_path, name):
    m = load_manifest(manifest_path(name))
    assert m.runs
    assert all(run.construction in m.constructions for run in m.runs)


def test_loaded_cone(tmp_path):
    m = load_manifest(write(tmp_path, CONE + "runs:\n  - {command: killing, construction: cone, field: rotation}\n"))
    assert m.seed == 3
    assert m.defaults.samples == 4
    assert m.defaults.dt == 1e-3
    assert m.charts["Theta"].box == ((-math.pi, math.pi),)
    assert m.constructions["cone"].dims == (1, 1, 1)
    assert m.field_for("rotation", "cone").is_lifted
    assert load_manifest(m.path, seed=11).seed == 11


def test_static_construction_orders_time_first(manifest_path):
    s = load_manifest(manifest_path("static.yaml")).constructions["static"]
    assert s.construction == "standard_static"
    assert s.display_coords() == ("t", "x", "y")


@pytest.mark.parametrize(
    "runs",
    [
        "  - {command: killing, construction: cone, field: missing}\n",
        "  - {command: explode, construction: cone}\n",
        "  - {command: describe, construction: nowhere}\n",
        "  - {command: spacetime-suite, construction: cone}\n",
        "  - {command: geodesic, construction: cone, point: [1, 0, 0]}\n",
        "  - {command: geodesic, construction: cone, point: [1, 0, 0], velocity: [1, 0, 0], dt: 0}\n",
    ],
)
def test_invalid_runs(tmp_path, runs):
    with pytest.raises(ManifestError):
        load_manifest(write(tmp_path, CONE + "runs:\n" + runs))


def test_invalid_documents(tmp_path):
    with pytest.raises(ManifestError, match="unknown chart 'M4'"):
        load_manifest(write(tmp_path, CONE.replace("[R, Theta, Phi]", "[R, Theta, M4]")))
    with pytest.raises(ManifestError):
        load_manifest(write(tmp_path, CONE.replace('f: "r", fbar', 'f: "theta", fbar')))
    with pytest.raises(ManifestError):
        load_manifest(write(tmp_path, CONE.replace("kind: sequential", "kind: spiral")))
    with pytest.raises(ManifestError):
        load_manifest(write(tmp_path, "charts: [\n"))
    with pytest.raises(ManifestError):
        load_manifest(str(tmp_path / "absent.yaml"))
    with pytest.raises(ManifestError):
        load_manifest(write(tmp_path, CONE + "  - {name: rotation, construction: cone, total: ['0', '1', '0']}\n"))


def test_report_store_round_trip(tmp_path):
    store = ReportStore(os.path.join(str(tmp_path), "db", "reports.db"))
    report = {
        "manifest": "cone.yaml",
        "seed": 42,
        "passed": False,
        "runs": [
            {"command": "describe", "construction": "cone", "passed": True},
            {"command": "killing", "construction": "cone", "passed": False},
        ],
    }
    try:
        run_id = store.add_report(report, created_at="2026-01-01T00:00:00")
        assert store.get_report(run_id) == report
        assert store.get_report(run_id + 1) is None
        recent = store.get_recent_runs()
        assert recent[0]["verdict"] == "fail"
        assert recent[0]["manifest"] == "cone.yaml"
        assert store.get_failed_results(run_id) == [{"position": 1, "command": "killing", "construction": "cone"}]
    finally:
        store.close()


RUN = "runs:\n  - {command: describe, construction: cone}\n"


@pytest.mark.parametrize(
    "old, new",
    [
        ("defaults: {samples: 4}", "defaults: {samples: abc}"),
        ("defaults: {samples: 4}", "defaults: {samples: 2.7}"),
        ("defaults: {samples: 4}", "defaults: {dt: fast}"),
        ("seed: 3", "seed: 1.5"),
        ("seed: 3", "seed: lucky"),
        ("version: 1", "version: one"),
    ],
)
def test_non_numeric_header_values(tmp_path, old, new):
    with pytest.raises(ManifestError):
        load_manifest(write(tmp_path, (CONE + RUN).replace(old, new)))


@pytest.mark.parametrize(
    "run",
    [
        "{command: verify-theorems, construction: cone, samples: abc}",
        "{command: verify-theorems, construction: cone, samples: 2.7}",
        "{command: verify-theorems, construction: cone, seed: x}",
        "{command: verify-theorems, construction: cone, lambda: big}",
        "{command: killing, construction: cone, field: rotation, numeric: two}",
        "{command: concircular, construction: cone, field: rotation, mu: k}",
    ],
)
def test_non_numeric_run_parameters(tmp_path, run):
    with pytest.raises(ManifestError):
        load_manifest(write(tmp_path, CONE + "runs:\n  - " + run + "\n"))


def test_lambda_estimate_is_not_a_number(tmp_path):
    m = load_manifest(write(tmp_path, CONE + "runs:\n  - {command: verify-theorems, construction: cone, lambda: estimate}\n"))
    assert m.runs[0].params["lambda"] == "estimate"


def test_time_sign_must_be_an_integer(tmp_path, manifest_path):
    with open(manifest_path("static.yaml"), encoding="utf-8") as fh:
        text = fh.read()
    assert "interval: [" in text
    bad = text.replace("interval: [", "sign: minus, interval: [", 1)
    with pytest.raises(ManifestError):
        load_manifest(write(tmp_path, bad, "static.yaml"))


def test_report_store_stamps_utc(tmp_path):
    store = ReportStore(str(tmp_path / "reports.db"))
    try:
        store.add_report({"manifest": "flat.yaml", "seed": 1, "passed": True, "runs": []})
        assert store.get_recent_runs()[0]["created_at"].endswith("+00:00")
    finally:
        store.close()
