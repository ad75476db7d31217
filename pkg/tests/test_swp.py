"""Assembly, closed-form curvature cases against the oracle, Einstein and scalar checks."""

import numpy as np
import numpy.testing as npt
import pytest

from app.backend.errors import (
    AssemblyError,
    ForbiddenCoordinateError,
    NameCollisionError,
    WarpingPositivityError,
    WrongBlockError,
)
from app.backend import swp
from app.backend.geometry import VectorFieldSpec, metric_at, sample_points
from app.backend.swp import (
    THEOREM_CASES,
    BlockVector,
    assemble,
    aux_scalars_at,
    case_variants,
    cf_connection,
    cf_ricci,
    compare_oracle,
    einstein_check,
    fbar_star_coefficient,
    oracle_ricci,
    scalar_relation_terms,
    summarize,
)
from tests.conftest import line

ALL_CASES = [(theorem, case) for theorem, cases in THEOREM_CASES.items() for case in cases]


@pytest.fixture(scope="module")
def mixed_hessian():
    return assemble(
        "sequential", line("X", "x", -1.0, 2.0), line("Y", "y", -1.0, 2.0), line("Z", "z", -1.0, 2.0),
        "1", "3 + x*y", name="mixed",
    )


def verdict(s, theorem, case, samples=12):
    return summarize(compare_oracle(s, theorem, case, samples=samples, seed=42))


def test_assembled_metric_is_block_diagonal(round_s3):
    p = [1.0, 1.2, 0.4]
    g = metric_at(round_s3.total, p).g
    npt.assert_allclose(np.diag(g), [1.0, np.sin(1.0) ** 2, (np.sin(1.0) * np.sin(1.2)) ** 2], rtol=1e-14)
    assert g[0, 1] == g[1, 2] == g[0, 2] == 0.0
    assert round_s3.dims == (1, 1, 1)
    assert round_s3.total.coords == ("psi", "theta", "phi")
    assert round_s3.base.coords == ("psi", "theta")


def test_iterated_product_builds_fbar(tower):
    assert tower.kind == "iterated"
    p = [0.3, 1.0, 0.8, 0.0]
    g = metric_at(tower.total, p).g
    assert g[3, 3] == pytest.approx(np.exp(0.3) * (1.0 + 0.8) ** 2, rel=1e-14)
    assert g[1, 1] == pytest.approx(np.exp(0.3), rel=1e-14)


def test_assembly_errors():
    x, y, z = line("X", "x", 0.5, 2.0), line("Y", "y", -1.0, 1.0), line("Z", "z", -1.0, 1.0)
    with pytest.raises(NameCollisionError):
        assemble("sequential", x, line("X2", "x", 0.0, 1.0), z, "1", "1")
    with pytest.raises(ForbiddenCoordinateError):
        assemble("sequential", x, y, z, "1 + y^2", "1")
    with pytest.raises(ForbiddenCoordinateError):
        assemble("sequential", x, y, z, "1", "2 + z")
    with pytest.raises(ForbiddenCoordinateError):
        assemble("multiply", x, y, z, "x", "2 + y")
    with pytest.raises(WarpingPositivityError):
        assemble("sequential", x, y, z, "x - 1", "1")
    with pytest.raises(AssemblyError):
        assemble("iterated", x, y, z, "x", fbar="x")
    with pytest.raises(AssemblyError):
        assemble("sequential", x, y, z, "x")


def test_multiply_assembly_matches_sequential():
    x, y, z = line("X", "x", 0.5, 2.0), line("Y", "y", -1.0, 1.0), line("Z", "z", -1.0, 1.0)
    multiply = assemble("multiply", x, y, z, "x", "x^2")
    sequential = assemble("sequential", x, y, z, "x", "x^2")
    assert multiply.total == sequential.total


def test_iterated_assembly_matches_separable_sequential(tower):
    sequential = assemble("sequential", tower.m1, tower.m2, tower.m3, "exp(x/2)", "exp(x/2)*(1 + u*v)")
    for p in sample_points(tower.total, 20, seed=5):
        npt.assert_allclose(metric_at(tower.total, p).g, metric_at(sequential.total, p).g, rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("fixture", ["flat_product", "polar_cone", "round_s3", "tower", "static_spacetime", "desitter_slab"])
@pytest.mark.parametrize("theorem, case", ALL_CASES)
def test_every_case_has_a_matching_variant(request, fixture, theorem, case):
    v = verdict(request.getfixturevalue(fixture), theorem, case, samples=8)
    assert v.passed, v.variants
    assert v.winner in case_variants(theorem, case)


@pytest.mark.parametrize("case", [2, 9])
def test_fiber_bracket_is_corrected_on_the_sphere(round_s3, case):
    v = verdict(round_s3, "riemann", case)
    assert v.matching == ("corrected",)
    assert v.winner == "corrected"


def test_ricci_fiber_coefficient_is_n3_minus_one(round_s3):
    v = verdict(round_s3, "ricci", 3)
    assert v.matching == ("fiber",)
    assert fbar_star_coefficient(round_s3, "fiber") == 0
    assert fbar_star_coefficient(round_s3, "theorem") == 1


def test_cross_ricci_keeps_base_hessian(mixed_hessian):
    v = verdict(mixed_hessian, "ricci", 4)
    assert v.matching == ("hessian",)
    p = [0.5, 0.7, 0.0]
    x = BlockVector.lift(mixed_hessian, 1, [1.0])
    y = BlockVector.lift(mixed_hessian, 2, [1.0])
    expected = -1.0 / (3.0 + 0.5 * 0.7)
    assert oracle_ricci(mixed_hessian, x, y, p) == pytest.approx(expected, rel=1e-12)
    assert cf_ricci(mixed_hessian, 1, 2, x, y, p, cross="hessian") == pytest.approx(expected, rel=1e-12)
    assert cf_ricci(mixed_hessian, 1, 2, x, y, p) == 0.0


def test_flat_product_connection_vanishes(flat_product):
    field = VectorFieldSpec.build(flat_product.m2, ["1 + y^2"])
    out = cf_connection(flat_product, 2, BlockVector.lift(flat_product, 1, [1.0]), field, [0.0, 0.5, 0.0])
    npt.assert_allclose(out.concat(), 0.0)


def test_cone_mixed_connection(polar_cone):
    field = VectorFieldSpec.build(polar_cone.m2, ["1"])
    out = cf_connection(polar_cone, 2, BlockVector.lift(polar_cone, 1, [1.0]), field, [2.0, 0.1, 0.2])
    npt.assert_allclose(out.concat(), [0.0, 0.5, 0.0])
    swapped = cf_connection(polar_cone, 2, BlockVector.lift(polar_cone, 2, [1.0]), VectorFieldSpec.build(polar_cone.m1, ["1"]),
                            [2.0, 0.1, 0.2], swapped=True)
    npt.assert_allclose(swapped.concat(), [0.0, 0.5, 0.0])


def test_connection_block_checks(polar_cone):
    field = VectorFieldSpec.build(polar_cone.m1, ["1"])
    with pytest.raises(WrongBlockError):
        cf_connection(polar_cone, 1, BlockVector.lift(polar_cone, 2, [1.0]), field, [2.0, 0.1, 0.2])
    with pytest.raises(WrongBlockError):
        cf_connection(polar_cone, 1, BlockVector.lift(polar_cone, 1, [1.0]), field, [2.0, 0.1, 0.2], swapped=True)
    with pytest.raises(ValueError):
        compare_oracle(polar_cone, "riemann", 10)


def test_einstein_conditions_on_the_three_sphere(round_s3):
    report = einstein_check(round_s3, lam=2.0, samples=10)
    assert report.conditions_hold
    assert report.oracle_einstein
    assert report.consistent
    assert report.conditions["ric1"] < 1e-10
    assert report.conditions["ric2"] < 1e-10
    assert report.candidates["corollary"]["passed"] == 1.0
    assert report.candidates["fiber"]["passed"] == 1.0
    assert report.candidates["theorem"]["passed"] == 0.0


def test_einstein_lambda_estimate(round_s3):
    report = einstein_check(round_s3, samples=10)
    assert report.lam_estimated
    assert report.lam == pytest.approx(2.0, rel=1e-10)
    assert report.lam_variance < 1e-16


def test_einstein_fails_on_the_cone(polar_cone):
    report = einstein_check(polar_cone, lam=0.0, samples=10)
    assert not report.oracle_einstein
    assert report.consistent


def test_scalar_relation_on_the_three_sphere(round_s3):
    terms = scalar_relation_terms(round_s3, [1.0, 1.2, 0.4])
    assert terms.rbar == pytest.approx(6.0, rel=1e-12)
    assert terms.r1 == pytest.approx(0.0, abs=1e-12)
    assert terms.u_term == pytest.approx(2.0, rel=1e-12)
    assert terms.ubar_term == pytest.approx(4.0, rel=1e-12)
    assert terms.residual < 1e-10


def test_scalar_relation_on_the_tower(tower):
    assert scalar_relation_terms(tower, [0.3, 1.0, 0.8, 0.2]).residual < 1e-9


def test_aux_scalars_on_the_three_sphere(round_s3):
    aux = aux_scalars_at(round_s3, [1.0, 1.2, 0.4], fbar_coefficient="fiber")
    assert aux.fstar == pytest.approx(-1.0, rel=1e-12)
    assert aux.fbarstar == pytest.approx(-2.0, rel=1e-12)
    assert aux.u == pytest.approx(np.sin(1.0))


def negated(fn):
    def wrapper(*args, **kwargs):
        out = fn(*args, **kwargs)
        return BlockVector(-out.b1, -out.b2, -out.b3)

    return wrapper


@pytest.mark.parametrize("case", THEOREM_CASES["connection"])
def test_wrong_sign_connection_fails(monkeypatch, round_s3, case):
    monkeypatch.setattr(swp, "cf_connection", negated(swp.cf_connection))
    v = verdict(round_s3, "connection", case, samples=6)
    assert not v.passed
    assert v.matching == ()


@pytest.mark.parametrize("case", [3, 4])
def test_wrong_sign_riemann_fails(monkeypatch, round_s3, case):
    monkeypatch.setattr(swp, "cf_riemann", negated(swp.cf_riemann))
    assert not verdict(round_s3, "riemann", case, samples=6).passed


def test_wrong_sign_ricci_fails(monkeypatch, round_s3):
    original = swp.cf_ricci
    monkeypatch.setattr(swp, "cf_ricci", lambda *a, **k: -original(*a, **k))
    assert not verdict(round_s3, "ricci", 2, samples=6).passed


def test_sign_flip_is_fixed_per_theorem(round_s3):
    for theorem, flip in (("connection", False), ("riemann", True), ("ricci", False)):
        for summary in verdict(round_s3, theorem, 1, samples=4).variants:
            assert summary.sign_flip is flip
