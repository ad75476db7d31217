"""Geodesics and symmetry fields on an assembled sequential warped product."""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from app.backend.errors import (
    ChartDefinitionError,
    DegenerateMetricError,
    ExprDomainError,
    FieldModeError,
    IntegrationError,
    PointOutsideBoxError,
    StepUnderflowError,
)
from app.backend.expr import Expr, as_expr, eval_gradient, eval_jet2, free_variables, to_source
from app.backend.geometry import (
    Chart,
    VectorFieldSpec,
    christoffel_unchecked,
    covariant_jacobian_at,
    lie_derivative_metric_at,
    metric_at,
    normalized_form,
    sample_points,
    scalar_calculus_at,
    vector_field_at,
)
from app.backend.swp import BlockVector, SequentialWarpedProduct

logger = logging.getLogger(__name__)

MIN_STEP = 1e-12
NONZERO_FIELD = 1e-8


@dataclass(frozen=True)
class GeodesicState:
    time: float
    point: np.ndarray
    velocity: np.ndarray
    # −Γ(v, v) for integrated states, the exact second derivative for prescribed curves
    acceleration: Optional[np.ndarray] = None


@dataclass
class Trajectory:
    states: List[GeodesicState]
    dt: float
    speed2: List[float] = field(default_factory=list)
    exit_time: Optional[float] = None
    stop_reason: str = "completed"

    @property
    def times(self) -> List[float]:
        return [st.time for st in self.states]

    def speed2_drift(self) -> float:
        if not self.speed2:
            return 0.0
        return max(abs(v - self.speed2[0]) for v in self.speed2)


@dataclass
class ConditionResiduals:
    res1: List[float] = field(default_factory=list)
    res2: List[float] = field(default_factory=list)
    res3: List[float] = field(default_factory=list)
    total: List[float] = field(default_factory=list)

    def max_block(self) -> float:
        return max(self.res1 + self.res2 + self.res3, default=0.0)

    def max_total(self) -> float:
        return max(self.total, default=0.0)


@dataclass(frozen=True)
class BlockFieldSpec:
    """ζ = ζ1 + ζ2 + ζ3 lifted from the factors, or one generic total-chart field."""

    blocks: Optional[Tuple[VectorFieldSpec, VectorFieldSpec, VectorFieldSpec]] = None
    generic: Optional[VectorFieldSpec] = None

    @classmethod
    def lifted(
        cls,
        s: SequentialWarpedProduct,
        zeta1: Optional[Sequence[Union[str, float, Expr]]] = None,
        zeta2: Optional[Sequence[Union[str, float, Expr]]] = None,
        zeta3: Optional[Sequence[Union[str, float, Expr]]] = None,
    ) -> "BlockFieldSpec":
        specs = []
        for block, comps in enumerate((zeta1, zeta2, zeta3), start=1):
            chart = s.factor(block)
            if comps is None:
                specs.append(VectorFieldSpec.zero(chart.dim))
                continue
            try:
                specs.append(VectorFieldSpec.build(chart, comps))
            except ChartDefinitionError as exc:
                raise FieldModeError(f"block {block} of a lifted field: {exc}") from exc
        return cls(blocks=(specs[0], specs[1], specs[2]))

    @classmethod
    def total_field(cls, s: SequentialWarpedProduct, comps: Sequence[Union[str, float, Expr]]) -> "BlockFieldSpec":
        return cls(generic=VectorFieldSpec.build(s.total, comps))

    @property
    def is_lifted(self) -> bool:
        return self.blocks is not None

    def block(self, i: int) -> VectorFieldSpec:
        if self.blocks is None:
            raise FieldModeError("field was given in total-chart form; per-block components are unavailable")
        return self.blocks[i - 1]

    def to_total(self, s: SequentialWarpedProduct) -> VectorFieldSpec:
        if self.generic is not None:
            return self.generic
        comps: List[Expr] = []
        for i in (1, 2, 3):
            comps.extend(self.block(i).components)
        return VectorFieldSpec(tuple(comps))


def _require_lifted(zeta: BlockFieldSpec, op: str) -> None:
    if not zeta.is_lifted:
        raise FieldModeError(f"{op} needs a lifted field (ζ1, ζ2, ζ3), got a total-chart field")


# ---------------------------------------------------------------------------
# Geodesics
# ---------------------------------------------------------------------------

def _acceleration(chart: Chart, x: np.ndarray, v: np.ndarray) -> np.ndarray:
    _m, gamma = christoffel_unchecked(chart, x)
    return -np.einsum("kij,i,j->k", gamma, v, v)


def _speed2(chart: Chart, x: np.ndarray, v: np.ndarray) -> float:
    return float(v @ metric_at(chart, x).g @ v)


def integrate_geodesic(
    s: SequentialWarpedProduct,
    init: GeodesicState,
    t_end: float,
    dt: float = 1e-3,
) -> Trajectory:
    """Fixed-step classical RK4 on x' = v, v' = −Γ(x)(v, v).

    Leaving the box ends the run: the partial trajectory is returned with
    ``exit_time`` set to the time of the first step outside.
    """
    chart = s.total
    if not dt > 0.0 or not math.isfinite(dt):
        raise IntegrationError(f"dt must be positive, got {dt}")
    if dt < MIN_STEP:
        raise StepUnderflowError(f"dt = {dt:.3e} is below the minimum step {MIN_STEP:.0e}")
    x = np.asarray(init.point, dtype=float).copy()
    v = np.asarray(init.velocity, dtype=float).copy()
    if x.shape != (chart.dim,) or v.shape != (chart.dim,):
        raise IntegrationError(f"initial state must have {chart.dim} coordinates and velocity components")
    if not np.all(np.isfinite(v)):
        raise IntegrationError("initial velocity must be finite")
    if not chart.contains(x):
        raise PointOutsideBoxError(f"initial point {x.tolist()} is outside the box of '{chart.name}'")

    t0 = float(init.time)
    span = float(t_end) - t0
    n_steps = max(1, int(round(span / dt))) if span > 0 else 0
    h = span / n_steps if n_steps else dt
    if n_steps and t0 + h == t0:
        raise StepUnderflowError(f"step {h:.3e} vanishes at t = {t0}")

    traj = Trajectory(states=[], dt=h)
    traj.states.append(GeodesicState(t0, x.copy(), v.copy(), _acceleration(chart, x, v)))
    traj.speed2.append(_speed2(chart, x, v))
    for step in range(1, n_steps + 1):
        t = t0 + step * h
        try:
            k1x, k1v = v, _acceleration(chart, x, v)
            k2x = v + 0.5 * h * k1v
            k2v = _acceleration(chart, x + 0.5 * h * k1x, k2x)
            k3x = v + 0.5 * h * k2v
            k3v = _acceleration(chart, x + 0.5 * h * k2x, k3x)
            k4x = v + h * k3v
            k4v = _acceleration(chart, x + h * k3x, k4x)
        except (ExprDomainError, DegenerateMetricError) as exc:
            logger.warning("geodesic on %s stopped at t = %.6g: %s", chart.name, t, exc)
            traj.exit_time = t
            traj.stop_reason = "domain"
            break
        x_new = x + h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        v_new = v + h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        if not (np.all(np.isfinite(x_new)) and np.all(np.isfinite(v_new))):
            raise IntegrationError(f"non-finite state at t = {t}")
        if not chart.contains(x_new):
            logger.warning("geodesic left the box of %s at t = %.6g", chart.name, t)
            traj.exit_time = t
            traj.stop_reason = "box_exit"
            break
        x, v = x_new, v_new
        traj.states.append(GeodesicState(t, x.copy(), v.copy(), _acceleration(chart, x, v)))
        traj.speed2.append(_speed2(chart, x, v))
    logger.debug("geodesic on %s: %d states, reason %s", chart.name, len(traj.states), traj.stop_reason)
    return traj


def sample_curve(
    s: SequentialWarpedProduct,
    coords: Sequence[Union[str, Expr]],
    t0: float,
    t_end: float,
    dt: float,
    param: str = "t",
) -> Trajectory:
    """Trajectory of a prescribed curve α(param); positions, velocities and accelerations are exact."""
    chart = s.total
    exprs = [as_expr(c) for c in coords]
    if len(exprs) != chart.dim:
        raise IntegrationError(f"curve needs {chart.dim} coordinate expressions, got {len(exprs)}")
    for e in exprs:
        extra = free_variables(e) - {param}
        if extra:
            raise IntegrationError(f"curve coordinate '{to_source(e)}' may only depend on '{param}'")
    if not dt > 0.0:
        raise IntegrationError(f"dt must be positive, got {dt}")
    n_steps = max(1, int(round((t_end - t0) / dt)))
    h = (t_end - t0) / n_steps
    traj = Trajectory(states=[], dt=h)
    for step in range(n_steps + 1):
        t = t0 + step * h
        jets = [eval_jet2(e, [t], (param,)) for e in exprs]
        x = np.array([j.value for j in jets])
        v = np.array([j.grad[0] for j in jets])
        a = np.array([j.hess[0, 0] for j in jets])
        if not chart.contains(x):
            traj.exit_time = t
            traj.stop_reason = "box_exit"
            break
        traj.states.append(GeodesicState(t, x, v, a))
        traj.speed2.append(_speed2(chart, x, v))
    return traj


def geodesic_condition_residuals(s: SequentialWarpedProduct, traj: Trajectory) -> ConditionResiduals:
    """Per-state residuals of the three block geodesic equations and of ∇_T T = 0 on the total chart."""
    out = ConditionResiduals()
    n1 = s.n1
    for state in traj.states:
        p = np.asarray(state.point, dtype=float)
        v = np.asarray(state.velocity, dtype=float)
        a = state.acceleration if state.acceleration is not None else _acceleration(s.total, p, v)
        p1, p2, p3 = s.split(p)
        v1, v2, v3 = s.split(v)
        a1, a2, a3 = s.split(a)
        fc = scalar_calculus_at(s.m1, p1, s.f)
        bc = scalar_calculus_at(s.base, s.base_point(p), s.fbar)
        g2 = metric_at(s.m2, p2).g
        g3 = metric_at(s.m3, p3).g
        gam1 = christoffel_unchecked(s.m1, p1)[1]
        gam2 = christoffel_unchecked(s.m2, p2)[1]
        gam3 = christoffel_unchecked(s.m3, p3)[1]
        fiber_push = bc.value * float(v3 @ g3 @ v3) * bc.grad

        r1 = a1 + np.einsum("kij,i,j->k", gam1, v1, v1) - fc.value * float(v2 @ g2 @ v2) * fc.grad - fiber_push[:n1]
        dlnf = float(fc.dvalue @ v1) / fc.value
        r2 = a2 + np.einsum("kij,i,j->k", gam2, v2, v2) + 2.0 * dlnf * v2 - fiber_push[n1:]
        dlnfbar = float(bc.dvalue @ np.concatenate([v1, v2])) / bc.value
        r3 = a3 + np.einsum("kij,i,j->k", gam3, v3, v3) + 2.0 * dlnfbar * v3
        gam = christoffel_unchecked(s.total, p)[1]
        rt = a + np.einsum("kij,i,j->k", gam, v, v)

        out.res1.append(float(np.max(np.abs(r1))))
        out.res2.append(float(np.max(np.abs(r2))))
        out.res3.append(float(np.max(np.abs(r3))))
        out.total.append(float(np.max(np.abs(rt))))
    return out


# ---------------------------------------------------------------------------
# Killing and conformal fields
# ---------------------------------------------------------------------------

@dataclass
class Condition:
    residual: float
    passed: bool


@dataclass
class KillingReport:
    samples: int
    tolerance: float
    numeric_max: float
    raw_max: float
    killing: bool
    checklist: Dict[str, Condition] = field(default_factory=dict)
    sufficient: Optional[bool] = None
    consistent: bool = True


@dataclass
class LieDecomposition:
    oracle: float
    decomposition: float
    residual: float
    terms: Dict[str, float] = field(default_factory=dict)


@dataclass
class ConformalReport:
    samples: int
    tolerance: float
    precondition_killing: bool
    numeric_max: float
    residuals: Dict[str, Condition] = field(default_factory=dict)
    factor_range: Dict[str, Tuple[float, float]] = field(default_factory=dict)


@dataclass
class ConservedSeries:
    values: List[float]
    drift: float


def _factor_parts(s: SequentialWarpedProduct, zeta: BlockFieldSpec, p: np.ndarray) -> Dict[str, np.ndarray]:
    p1, p2, p3 = s.split(p)
    return {
        "z1": vector_field_at(s.m1, zeta.block(1), p1)[0],
        "z2": vector_field_at(s.m2, zeta.block(2), p2)[0],
        "z3": vector_field_at(s.m3, zeta.block(3), p3)[0],
    }


def _warping_derivatives(s: SequentialWarpedProduct, zeta: BlockFieldSpec, p: np.ndarray) -> Dict[str, float]:
    """f, f̄ with ζ1(f) and (ζ1+ζ2)(f̄)."""
    parts = _factor_parts(s, zeta, p)
    f, df = eval_gradient(s.f, s.split(p)[0], s.m1.coords)
    fbar, dfbar = eval_gradient(s.fbar, s.base_point(p), s.base.coords)
    return {
        "f": f,
        "fbar": fbar,
        "z1_f": float(df @ parts["z1"]),
        "z12_fbar": float(dfbar @ np.concatenate([parts["z1"], parts["z2"]])),
    }


def _numeric_lie(s: SequentialWarpedProduct, zeta: BlockFieldSpec, points: np.ndarray) -> Tuple[float, float]:
    total = zeta.to_total(s)
    normalized = raw = 0.0
    for p in points:
        lie = lie_derivative_metric_at(s.total, total, p)
        g = metric_at(s.total, p).g
        raw = max(raw, float(np.max(np.abs(lie))))
        normalized = max(normalized, float(np.max(np.abs(normalized_form(lie, g)))))
    return normalized, raw


def killing_check(
    s: SequentialWarpedProduct,
    zeta: BlockFieldSpec,
    samples: int = 50,
    seed: int = 42,
    tol: float = 1e-8,
) -> KillingReport:
    """Numeric max |L_ζ ḡ| (orthonormal components) plus the per-factor sufficiency checklist."""
    points = sample_points(s.total, samples, seed)
    numeric, raw = _numeric_lie(s, zeta, points)
    report = KillingReport(samples=len(points), tolerance=tol, numeric_max=numeric, raw_max=raw, killing=numeric < tol)
    if not zeta.is_lifted:
        return report

    worst = {"zeta1_killing": 0.0, "zeta2_killing": 0.0, "zeta3_killing": 0.0, "zeta1_f": 0.0, "zeta12_fbar": 0.0}
    for p in points:
        parts = s.split(p)
        for i in (1, 2, 3):
            lie = lie_derivative_metric_at(s.factor(i), zeta.block(i), parts[i - 1])
            key = f"zeta{i}_killing"
            worst[key] = max(worst[key], float(np.max(np.abs(lie))))
        wd = _warping_derivatives(s, zeta, p)
        worst["zeta1_f"] = max(worst["zeta1_f"], abs(wd["z1_f"]))
        worst["zeta12_fbar"] = max(worst["zeta12_fbar"], abs(wd["z12_fbar"]))
    report.checklist = {name: Condition(residual=value, passed=value < tol) for name, value in worst.items()}
    report.sufficient = all(c.passed for c in report.checklist.values())
    report.consistent = (not report.sufficient) or report.killing
    if not report.consistent:
        logger.warning("sufficiency checklist holds but numeric |L_zeta g| = %.3e", numeric)
    return report


def lie_decomposition_check(
    s: SequentialWarpedProduct,
    zeta: BlockFieldSpec,
    x: BlockVector,
    y: BlockVector,
    p: Sequence[float],
) -> LieDecomposition:
    """(L_ζ ḡ)(X, Y) from the oracle versus its five-term block decomposition."""
    _require_lifted(zeta, "lie_decomposition_check")
    q = np.asarray(p, dtype=float)
    p1, p2, p3 = s.split(q)
    oracle = float(x.concat() @ lie_derivative_metric_at(s.total, zeta.to_total(s), q) @ y.concat())
    wd = _warping_derivatives(s, zeta, q)
    g2 = metric_at(s.m2, p2).g
    g3 = metric_at(s.m3, p3).g
    terms = {
        "factor1": float(x.b1 @ lie_derivative_metric_at(s.m1, zeta.block(1), p1) @ y.b1),
        "factor2": wd["f"] ** 2 * float(x.b2 @ lie_derivative_metric_at(s.m2, zeta.block(2), p2) @ y.b2),
        "factor3": wd["fbar"] ** 2 * float(x.b3 @ lie_derivative_metric_at(s.m3, zeta.block(3), p3) @ y.b3),
        "warp_f": 2.0 * wd["f"] * wd["z1_f"] * float(x.b2 @ g2 @ y.b2),
        "warp_fbar": 2.0 * wd["fbar"] * wd["z12_fbar"] * float(x.b3 @ g3 @ y.b3),
    }
    decomposition = sum(terms.values())
    return LieDecomposition(oracle=oracle, decomposition=decomposition, residual=abs(oracle - decomposition), terms=terms)


def conformal_factors(
    s: SequentialWarpedProduct,
    zeta: BlockFieldSpec,
    samples: int = 50,
    seed: int = 42,
    tol: float = 1e-8,
) -> ConformalReport:
    """For a Killing ζ: ζ1 Killing, ζ2 conformal with factor −ζ1(ln f), ζ3 with −(ζ1+ζ2)(ln f̄)."""
    _require_lifted(zeta, "conformal_factors")
    points = sample_points(s.total, samples, seed)
    numeric, _raw = _numeric_lie(s, zeta, points)
    precondition = numeric < tol
    if not precondition:
        logger.warning("conformal_factors: zeta is not Killing (|L_zeta g| = %.3e); continuing", numeric)
    worst = {"zeta1": 0.0, "zeta2": 0.0, "zeta3": 0.0}
    sigma2: List[float] = []
    sigma3: List[float] = []
    for p in points:
        p1, p2, p3 = s.split(p)
        wd = _warping_derivatives(s, zeta, p)
        ln_f = wd["z1_f"] / wd["f"]
        ln_fbar = wd["z12_fbar"] / wd["fbar"]
        sigma2.append(-ln_f)
        sigma3.append(-ln_fbar)
        l1 = lie_derivative_metric_at(s.m1, zeta.block(1), p1)
        l2 = lie_derivative_metric_at(s.m2, zeta.block(2), p2) + 2.0 * ln_f * metric_at(s.m2, p2).g
        l3 = lie_derivative_metric_at(s.m3, zeta.block(3), p3) + 2.0 * ln_fbar * metric_at(s.m3, p3).g
        worst["zeta1"] = max(worst["zeta1"], float(np.max(np.abs(l1))))
        worst["zeta2"] = max(worst["zeta2"], float(np.max(np.abs(l2))))
        worst["zeta3"] = max(worst["zeta3"], float(np.max(np.abs(l3))))
    return ConformalReport(
        samples=len(points),
        tolerance=tol,
        precondition_killing=precondition,
        numeric_max=numeric,
        residuals={name: Condition(residual=value, passed=value < tol) for name, value in worst.items()},
        factor_range={"zeta2": (min(sigma2), max(sigma2)), "zeta3": (min(sigma3), max(sigma3))},
    )


def conserved_along_geodesic(s: SequentialWarpedProduct, zeta: BlockFieldSpec, traj: Trajectory) -> ConservedSeries:
    """ḡ(ζ, α′) at every state of the trajectory."""
    total = zeta.to_total(s)
    values: List[float] = []
    for state in traj.states:
        z, _jac = vector_field_at(s.total, total, state.point)
        g = metric_at(s.total, state.point).g
        values.append(float(z @ g @ np.asarray(state.velocity, dtype=float)))
    drift = max((abs(v - values[0]) for v in values), default=0.0)
    return ConservedSeries(values=values, drift=drift)


# ---------------------------------------------------------------------------
# Concircular fields
# ---------------------------------------------------------------------------

@dataclass
class ConcircularReport:
    samples: int
    tolerance: float
    mu: List[float]
    residuals: List[float]
    max_residual: float
    conformal_residual: float
    concircular: bool


@dataclass
class SubCheck:
    status: str  # holds | fails | not-applicable | hypothesis-failed
    detail: Dict[str, float] = field(default_factory=dict)


@dataclass
class ConcircularSuiteReport:
    total: ConcircularReport
    factors: Dict[str, ConcircularReport]
    warpings_constant: bool
    nonzero_blocks: Tuple[bool, bool, bool]
    subchecks: Dict[str, SubCheck] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.status != "fails" for c in self.subchecks.values())


def concircular_at(chart: Chart, v: VectorFieldSpec, p: Sequence[float]) -> Tuple[float, float]:
    """Least-squares μ of ∇ζ ≈ μ·Id over the coordinate frame and the componentwise sup residual."""
    jac = covariant_jacobian_at(chart, v, p)
    mu = float(np.trace(jac)) / chart.dim
    residual = float(np.max(np.abs(jac - mu * np.eye(chart.dim))))
    return mu, residual


def concircular_over(chart: Chart, v: VectorFieldSpec, points: np.ndarray, tol: float = 1e-8) -> ConcircularReport:
    mus: List[float] = []
    residuals: List[float] = []
    conformal = 0.0
    for p in points:
        mu, residual = concircular_at(chart, v, p)
        mus.append(mu)
        residuals.append(residual)
        lie = lie_derivative_metric_at(chart, v, p)
        conformal = max(conformal, float(np.max(np.abs(lie - 2.0 * mu * metric_at(chart, p).g))))
    max_residual = max(residuals, default=0.0)
    return ConcircularReport(
        samples=len(points),
        tolerance=tol,
        mu=mus,
        residuals=residuals,
        max_residual=max_residual,
        conformal_residual=conformal,
        concircular=max_residual < tol,
    )


def concircular_check(
    s: SequentialWarpedProduct,
    zeta: Union[BlockFieldSpec, VectorFieldSpec],
    samples: int = 50,
    seed: int = 42,
    tol: float = 1e-8,
) -> ConcircularReport:
    total = zeta.to_total(s) if isinstance(zeta, BlockFieldSpec) else zeta
    return concircular_over(s.total, total, sample_points(s.total, samples, seed), tol)


def concircular_suite(
    s: SequentialWarpedProduct,
    zeta: BlockFieldSpec,
    samples: int = 50,
    seed: int = 42,
    tol: float = 1e-8,
) -> ConcircularSuiteReport:
    """Three sub-checks relating concircularity of ζ on the product to its blocks and the warpings.

    (i)   constant warpings, total concircular: every block concircular with the same μ
    (ii)  nonconstant warping, every block concircular: the total must fail
    (iii) ζ = ζ1 with μ1 = ζ1(ln f) = ζ1(ln f̄): the total is concircular with μ = μ1
    """
    _require_lifted(zeta, "concircular_suite")
    points = sample_points(s.total, samples, seed)
    total = concircular_over(s.total, zeta.to_total(s), points, tol)
    factors: Dict[str, ConcircularReport] = {}
    for i in (1, 2, 3):
        chart = s.factor(i)
        sub = np.array([s.split(p)[i - 1] for p in points])
        factors[f"zeta{i}"] = concircular_over(chart, zeta.block(i), sub, tol)

    grad_f = grad_fbar = 0.0
    norms = [0.0, 0.0, 0.0]
    log_f: List[float] = []
    log_fbar: List[float] = []
    for p in points:
        wd = _warping_derivatives(s, zeta, p)
        _f, df = eval_gradient(s.f, s.split(p)[0], s.m1.coords)
        _fb, dfb = eval_gradient(s.fbar, s.base_point(p), s.base.coords)
        grad_f = max(grad_f, float(np.max(np.abs(df))))
        grad_fbar = max(grad_fbar, float(np.max(np.abs(dfb))))
        for i, part in enumerate(_factor_parts(s, zeta, p).values()):
            norms[i] = max(norms[i], float(np.max(np.abs(part))))
        log_f.append(wd["z1_f"] / wd["f"])
        log_fbar.append(wd["z12_fbar"] / wd["fbar"])
    constant = grad_f < tol and grad_fbar < tol
    nonzero = (norms[0] > NONZERO_FIELD, norms[1] > NONZERO_FIELD, norms[2] > NONZERO_FIELD)
    report = ConcircularSuiteReport(total=total, factors=factors, warpings_constant=constant, nonzero_blocks=nonzero)

    mu_total = np.array(total.mu)
    if constant and all(nonzero) and total.concircular:
        spread = max(float(np.max(np.abs(np.array(rep.mu) - mu_total))) for rep in factors.values())
        ok = all(rep.concircular for rep in factors.values()) and spread < tol
        report.subchecks["constant_warpings"] = SubCheck("holds" if ok else "fails", {"mu_spread": spread})
    else:
        report.subchecks["constant_warpings"] = SubCheck("not-applicable")

    if not constant and all(nonzero) and all(rep.concircular for rep in factors.values()):
        status = "holds" if not total.concircular else "fails"
        report.subchecks["warping_obstruction"] = SubCheck(status, {"total_residual": total.max_residual})
    else:
        report.subchecks["warping_obstruction"] = SubCheck("not-applicable")

    if nonzero[0] and not nonzero[1] and not nonzero[2]:
        mu1 = np.array(factors["zeta1"].mu)
        gap_f = float(np.max(np.abs(mu1 - np.array(log_f))))
        gap_fbar = float(np.max(np.abs(mu1 - np.array(log_fbar))))
        detail = {
            "mu1_residual": factors["zeta1"].max_residual,
            "mu1_vs_ln_f": gap_f,
            "mu1_vs_ln_fbar": gap_fbar,
            "total_residual": total.max_residual,
        }
        if factors["zeta1"].concircular and gap_f < tol and gap_fbar < tol:
            mu_gap = float(np.max(np.abs(mu_total - mu1)))
            detail["mu_gap"] = mu_gap
            status = "holds" if total.concircular and mu_gap < tol else "fails"
        else:
            status = "hypothesis-failed"
        report.subchecks["base_converse"] = SubCheck(status, detail)
    else:
        report.subchecks["base_converse"] = SubCheck("not-applicable")

    for name, check in report.subchecks.items():
        if check.status == "fails":
            logger.warning("concircular sub-check %s fails: %s", name, check.detail)
    return report
