"""Lorentzian space-times built on the sequential assembler.

Standard static:  ḡ = (g1 ⊕ f²g2) ⊕ f̄²(−dt²), the time block last internally.
GRW:              ḡ = −dt² ⊕ a(t)²(g1 ⊕ f²g2), assembled as (I ×_a M1) ×_{a·f} M2.
"""

import dataclasses
import logging
from dataclasses import dataclass
from typing import Dict, Tuple, Union

import numpy as np

from app.backend.errors import AssemblyError, ChartDefinitionError, ForbiddenCoordinateError
from app.backend.expr import Expr, as_expr, const, eval_gradient, eval_jet2, free_variables, mul, to_source
from app.backend.fields import BlockFieldSpec, ConcircularReport, concircular_check, concircular_over
from app.backend.geometry import Chart, VectorFieldSpec, sample_points
from app.backend.swp import AssemblyKind, SequentialWarpedProduct, assemble

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class IntervalChart:
    interval: Tuple[float, float]
    coord: str = "t"
    sign: int = -1

    def __post_init__(self) -> None:
        lo, hi = self.interval
        if not lo < hi:
            raise ChartDefinitionError(f"interval ({lo}, {hi}) for '{self.coord}' is empty")
        if self.sign not in (1, -1):
            raise ChartDefinitionError(f"interval sign must be +1 or -1, got {self.sign}")

    def chart(self, name: str = "I") -> Chart:
        return Chart(
            name=name,
            coords=(self.coord,),
            metric=((const(float(self.sign)),),),
            box=((float(self.interval[0]), float(self.interval[1])),),
        )


def standard_static(
    interval: IntervalChart,
    m1: Chart,
    m2: Chart,
    f: Union[str, Expr],
    fbar: Union[str, Expr],
    seed: int = 0,
    name: str = "static",
) -> SequentialWarpedProduct:
    s = assemble(AssemblyKind.SEQUENTIAL, m1, m2, interval.chart(), f, fbar, seed=seed, name=name)
    n = s.total.dim
    order = (n - 1,) + tuple(range(n - 1))
    return dataclasses.replace(s, construction="standard_static", display_order=order)


def grw(
    interval: IntervalChart,
    scale: Union[str, Expr],
    m1: Chart,
    m2: Chart,
    f: Union[str, Expr],
    seed: int = 0,
    name: str = "grw",
) -> SequentialWarpedProduct:
    """−dt² ⊕ a(t)²(g1 ⊕ f²g2) with a = ``scale`` over t and f over M1."""
    a = as_expr(scale)
    inner = as_expr(f)
    extra = free_variables(a) - {interval.coord}
    if extra:
        raise ForbiddenCoordinateError(f"scale factor '{to_source(a)}' may only depend on '{interval.coord}'")
    extra = free_variables(inner) - set(m1.coords)
    if extra:
        raise ForbiddenCoordinateError(f"inner warping '{to_source(inner)}' references {sorted(extra)}")
    s = assemble(AssemblyKind.SEQUENTIAL, interval.chart(), m1, m2, a, mul(a, inner), seed=seed, name=name)
    return dataclasses.replace(s, construction="grw", params=(("scale", a), ("inner", inner)))


@dataclass
class GrwConcircularReport:
    samples: int
    tolerance: float
    inner_gradient: float
    inner_constant: bool
    udot_gap: float
    udot_matches: bool
    total: ConcircularReport
    mu_gap: float
    interval: ConcircularReport
    hypotheses_hold: bool
    consistent: bool


def grw_concircular_check(
    g: SequentialWarpedProduct,
    u: Union[str, Expr],
    samples: int = 50,
    seed: int = 42,
    tol: float = 1e-8,
) -> GrwConcircularReport:
    """Check ζ = u∂t against the hypotheses: (i) inner warping constant, (ii) u̇ = u·(ln a)˙.

    The concircular check always runs; with both hypotheses it must pass with μ = u̇.
    """
    if g.construction != "grw":
        raise AssemblyError(f"grw_concircular_check needs a GRW construction, got '{g.construction}'")
    t = g.m1.coords[0]
    u_expr = as_expr(u)
    extra = free_variables(u_expr) - {t}
    if extra:
        raise ForbiddenCoordinateError(f"u = '{to_source(u_expr)}' may only depend on '{t}'")
    scale = g.param("scale")
    inner = g.param("inner")
    points = sample_points(g.total, samples, seed)

    inner_grad = 0.0
    udot_gap = 0.0
    udots: Dict[int, float] = {}
    for k, p in enumerate(points):
        p1, p2, _p3 = g.split(p)
        _value, d_inner = eval_gradient(inner, p2, g.m2.coords)
        inner_grad = max(inner_grad, float(np.max(np.abs(d_inner))))
        uj = eval_jet2(u_expr, p1, (t,))
        a, da = eval_gradient(scale, p1, (t,))
        udots[k] = float(uj.grad[0])
        udot_gap = max(udot_gap, abs(uj.grad[0] - uj.value * da[0] / a))

    zeta = BlockFieldSpec.lifted(g, [u_expr], None, None)
    total = concircular_check(g, zeta, samples=samples, seed=seed, tol=tol)
    mu_gap = max((abs(mu - udots[k]) for k, mu in enumerate(total.mu)), default=0.0)
    interval_points = np.array([g.split(p)[0] for p in points])
    interval = concircular_over(g.m1, VectorFieldSpec((u_expr,)), interval_points, tol)

    hypotheses = inner_grad < tol and udot_gap < tol
    consistent = (not hypotheses) or (total.concircular and mu_gap < tol)
    if not consistent:
        logger.warning("GRW hypotheses hold but u*d/dt is not concircular (residual %.3e)", total.max_residual)
    return GrwConcircularReport(
        samples=len(points),
        tolerance=tol,
        inner_gradient=inner_grad,
        inner_constant=inner_grad < tol,
        udot_gap=udot_gap,
        udot_matches=udot_gap < tol,
        total=total,
        mu_gap=mu_gap,
        interval=interval,
        hypotheses_hold=hypotheses,
        consistent=consistent,
    )
