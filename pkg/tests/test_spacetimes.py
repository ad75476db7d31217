"""Standard static and GRW space-times."""

import numpy as np
import pytest

from app.backend.errors import AssemblyError, ChartDefinitionError, ForbiddenCoordinateError
from app.backend.fields import BlockFieldSpec, killing_check
from app.backend.geometry import curvature_at, metric_at, sample_points
from app.backend.spacetimes import IntervalChart, grw, grw_concircular_check
from tests.conftest import line


def test_static_spacetime_is_lorentzian(static_spacetime):
    assert static_spacetime.construction == "standard_static"
    assert static_spacetime.display_coords() == ("t", "x", "y")
    for p in sample_points(static_spacetime.total, 8, seed=1):
        assert metric_at(static_spacetime.total, p).det < 0.0
    assert static_spacetime.to_display([1.5, 0.2, -0.3]) == [-0.3, 1.5, 0.2]


def test_static_time_translation_is_killing(static_spacetime):
    report = killing_check(static_spacetime, BlockFieldSpec.lifted(static_spacetime, zeta3=["1"]), samples=10)
    assert report.killing
    assert report.sufficient


def test_desitter_slab_metric(desitter_slab):
    g = metric_at(desitter_slab.total, [0.5, 0.2, -0.1]).g
    np.testing.assert_allclose(np.diag(g), [-1.0, np.exp(1.0), np.exp(1.0)], rtol=1e-14)
    assert desitter_slab.construction == "grw"


def test_grw_exponential_field_is_concircular(desitter_slab):
    report = grw_concircular_check(desitter_slab, "exp(t)", samples=10)
    assert report.hypotheses_hold
    assert report.total.concircular
    assert report.mu_gap < 1e-10
    assert report.consistent


def test_grw_constant_field_fails_hypotheses(desitter_slab):
    report = grw_concircular_check(desitter_slab, "1", samples=10)
    assert not report.udot_matches
    assert not report.hypotheses_hold
    assert not report.total.concircular
    assert report.consistent


def test_grw_inner_warping_is_not_needed():
    tilted = grw(IntervalChart((0.1, 1.0)), "exp(t)", line("X", "x", 0.5, 1.5), line("Y", "y", -1.0, 1.0), "x")
    report = grw_concircular_check(tilted, "exp(t)", samples=10)
    assert not report.inner_constant
    assert not report.hypotheses_hold
    assert report.total.concircular
    assert report.mu_gap < 1e-10


def test_grw_input_errors(desitter_slab, static_spacetime):
    with pytest.raises(ForbiddenCoordinateError):
        grw(IntervalChart((0.1, 1.0)), "exp(x)", line("X", "x", -1.0, 1.0), line("Y", "y", -1.0, 1.0), "1")
    with pytest.raises(ForbiddenCoordinateError):
        grw_concircular_check(desitter_slab, "x")
    with pytest.raises(AssemblyError):
        grw_concircular_check(static_spacetime, "1")
    with pytest.raises(ChartDefinitionError):
        IntervalChart((1.0, 0.0))


def test_desitter_slab_has_constant_scalar_curvature(desitter_slab):
    for p in sample_points(desitter_slab.total, 20, seed=42):
        assert curvature_at(desitter_slab.total, p).scalar == pytest.approx(6.0, rel=1e-10)


def test_flat_slab_time_position_field():
    slab = grw(IntervalChart((0.1, 1.0)), "1", line("X", "x", -1.0, 1.0), line("Y", "y", -1.0, 1.0), "1")
    report = grw_concircular_check(slab, "t", samples=10)
    assert report.interval.concircular
    np.testing.assert_allclose(report.interval.mu, 1.0, atol=1e-12)
    assert report.udot_gap == pytest.approx(1.0)
    assert not report.hypotheses_hold
    assert not report.total.concircular
    assert report.consistent
