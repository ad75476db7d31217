"""Brute-force single-chart oracle.

Everything here works on an arbitrary coordinate chart with a non-degenerate
(possibly indefinite) metric and knows nothing about warped products.

Index conventions, all arrays are numpy:
  - ``gamma[k, i, j]``      = Γ^k_ij
  - ``riemann[l, k, i, j]`` = R^l_kij with R(∂_i, ∂_j)∂_k = R^l_kij ∂_l and
    R^l_kij = ∂_i Γ^l_jk − ∂_j Γ^l_ik + Γ^l_im Γ^m_jk − Γ^l_jm Γ^m_ik
  - ``ricci[i, j]``         = R^m_imj
"""

import logging
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.stats import qmc

from app.backend.errors import ChartDefinitionError, DegenerateMetricError, PointOutsideBoxError
from app.backend.expr import Expr, ZERO, as_expr, eval_gradient, eval_jet2, free_variables, to_source

logger = logging.getLogger(__name__)

DEGENERACY_THRESHOLD = 1e-12
SAMPLE_MARGIN = 0.05

ExprLike = Union[str, float, int, Expr]


@dataclass(frozen=True)
class Chart:
    """One coordinate patch: coordinates, symmetric metric of expressions, open box."""

    name: str
    coords: Tuple[str, ...]
    metric: Tuple[Tuple[Expr, ...], ...]
    box: Tuple[Tuple[float, float], ...]

    def __post_init__(self) -> None:
        n = len(self.coords)
        if n == 0:
            raise ChartDefinitionError(f"chart '{self.name}' has no coordinates")
        if len(set(self.coords)) != n:
            raise ChartDefinitionError(f"chart '{self.name}' repeats a coordinate name")
        if len(self.metric) != n or any(len(row) != n for row in self.metric):
            raise ChartDefinitionError(f"chart '{self.name}' metric must be {n}x{n}")
        if len(self.box) != n:
            raise ChartDefinitionError(f"chart '{self.name}' box must have {n} intervals")
        for name, (lo, hi) in zip(self.coords, self.box):
            if not lo < hi:
                raise ChartDefinitionError(f"chart '{self.name}': empty interval for '{name}'")
        declared = set(self.coords)
        for i in range(n):
            for j in range(n):
                if self.metric[i][j] != self.metric[j][i]:
                    raise ChartDefinitionError(f"chart '{self.name}' metric is not symmetric at ({i},{j})")
                unknown = free_variables(self.metric[i][j]) - declared
                if unknown:
                    raise ChartDefinitionError(
                        f"chart '{self.name}' metric entry ({i},{j}) uses undeclared {sorted(unknown)}"
                    )

    @property
    def dim(self) -> int:
        return len(self.coords)

    @classmethod
    def build(
        cls,
        name: str,
        coords: Sequence[str],
        metric: Sequence[Union[ExprLike, Sequence[ExprLike]]],
        box: Sequence[Sequence[float]],
    ) -> "Chart":
        """Build from strings. ``metric`` is either a diagonal list or a full/upper-triangular matrix.

        The lower triangle always shares the upper triangle's AST objects.
        """
        n = len(coords)
        rows: List[List[Expr]] = [[ZERO] * n for _ in range(n)]
        diagonal = all(not isinstance(m, (list, tuple)) for m in metric)
        if diagonal:
            if len(metric) != n:
                raise ChartDefinitionError(f"chart '{name}' diagonal metric needs {n} entries")
            for i, entry in enumerate(metric):
                rows[i][i] = as_expr(entry)  # type: ignore[arg-type]
        else:
            if len(metric) != n:
                raise ChartDefinitionError(f"chart '{name}' metric must have {n} rows")
            for i, row in enumerate(metric):
                if not isinstance(row, (list, tuple)) or len(row) != n:
                    raise ChartDefinitionError(f"chart '{name}' metric row {i} must have {n} entries")
                for j in range(i, n):
                    upper = as_expr(row[j])
                    rows[i][j] = upper
                    rows[j][i] = upper
                for j in range(i):
                    lower = as_expr(row[j])
                    if lower != rows[i][j]:
                        raise ChartDefinitionError(
                            f"chart '{name}' metric is not symmetric: ({i},{j}) = {to_source(lower)}"
                        )
        return cls(
            name=name,
            coords=tuple(coords),
            metric=tuple(tuple(r) for r in rows),
            box=tuple((float(lo), float(hi)) for lo, hi in box),
        )

    def contains(self, p: Iterable[float]) -> bool:
        q = np.asarray(p, dtype=float)
        return bool(all(lo < x < hi for x, (lo, hi) in zip(q, self.box)))


@dataclass(frozen=True)
class VectorFieldSpec:
    """Contravariant components over a chart's coordinates."""

    components: Tuple[Expr, ...]

    @classmethod
    def build(cls, chart: Chart, components: Sequence[ExprLike]) -> "VectorFieldSpec":
        if len(components) != chart.dim:
            raise ChartDefinitionError(
                f"field on '{chart.name}' needs {chart.dim} components, got {len(components)}"
            )
        parsed = tuple(as_expr(c) for c in components)
        declared = set(chart.coords)
        for c in parsed:
            unknown = free_variables(c) - declared
            if unknown:
                raise ChartDefinitionError(f"field component {to_source(c)} uses undeclared {sorted(unknown)}")
        return cls(parsed)

    @classmethod
    def zero(cls, dim: int) -> "VectorFieldSpec":
        return cls(tuple(ZERO for _ in range(dim)))

    def is_zero(self) -> bool:
        return all(c == ZERO for c in self.components)


@dataclass(frozen=True)
class MetricEval:
    g: np.ndarray
    g_inv: np.ndarray
    det: float


@dataclass(frozen=True)
class Curvature:
    riemann: np.ndarray
    ricci: np.ndarray
    scalar: float


@dataclass(frozen=True)
class ScalarCalculus:
    value: float
    grad: np.ndarray  # contravariant grad^i
    dvalue: np.ndarray  # partials ∂_i s
    hess: np.ndarray
    lap: float
    gradnorm2: float


def _point(c: Chart, p: Iterable[float], check_box: bool) -> np.ndarray:
    q = np.asarray(p, dtype=float).reshape(-1)
    if q.shape[0] != c.dim:
        raise ValueError(f"point has {q.shape[0]} entries, chart '{c.name}' has dimension {c.dim}")
    if not np.all(np.isfinite(q)):
        raise ValueError("point must be finite")
    if check_box and not c.contains(q):
        raise PointOutsideBoxError(f"point {q.tolist()} is outside the box of chart '{c.name}'")
    return q


def _metric_derivatives(c: Chart, p: np.ndarray, order: int) -> Tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]:
    """g[i,j], dg[m,i,j] = ∂_m g_ij and (order 2) ddg[m,n,i,j] = ∂_m ∂_n g_ij."""
    n = c.dim
    g = np.zeros((n, n))
    dg = np.zeros((n, n, n))
    ddg = np.zeros((n, n, n, n)) if order > 1 else None
    for i in range(n):
        for j in range(i, n):
            entry = c.metric[i][j]
            if order > 1:
                jet = eval_jet2(entry, p, c.coords)
                value, grad = jet.value, jet.grad
                ddg[:, :, i, j] = jet.hess  # type: ignore[index]
                ddg[:, :, j, i] = jet.hess  # type: ignore[index]
            else:
                value, grad = eval_gradient(entry, p, c.coords)
            g[i, j] = g[j, i] = value
            dg[:, i, j] = grad
            dg[:, j, i] = grad
    return g, dg, ddg


def _invert(c: Chart, g: np.ndarray) -> MetricEval:
    scale = float(np.max(np.abs(g)))
    det = float(np.linalg.det(g))
    if scale == 0.0 or abs(det) <= DEGENERACY_THRESHOLD * scale ** c.dim:
        raise DegenerateMetricError(f"metric of chart '{c.name}' is degenerate (det = {det:.3e})")
    g_inv = np.linalg.inv(g)
    return MetricEval(g=g, g_inv=0.5 * (g_inv + g_inv.T), det=det)


def metric_at(c: Chart, p: Iterable[float]) -> MetricEval:
    q = _point(c, p, check_box=True)
    g, _dg, _ = _metric_derivatives(c, q, order=1)
    return _invert(c, g)


def _first_kind(dg: np.ndarray) -> np.ndarray:
    # [l,i,j] = ½(∂_i g_jl + ∂_j g_il − ∂_l g_ij)
    return 0.5 * (np.einsum("ijl->lij", dg) + np.einsum("jil->lij", dg) - dg)


def _symmetrize_lower(t: np.ndarray) -> np.ndarray:
    swapped = np.swapaxes(t, -1, -2)
    return 0.5 * (t + swapped)


def _christoffel(c: Chart, p: np.ndarray) -> Tuple[MetricEval, np.ndarray]:
    g, dg, _ = _metric_derivatives(c, p, order=1)
    m = _invert(c, g)
    gamma = np.einsum("kl,lij->kij", m.g_inv, _first_kind(dg))
    return m, _symmetrize_lower(gamma)


def christoffel_at(c: Chart, p: Iterable[float]) -> np.ndarray:
    return _christoffel(c, _point(c, p, check_box=True))[1]


def christoffel_unchecked(c: Chart, p: Iterable[float]) -> Tuple[MetricEval, np.ndarray]:
    """Christoffel symbols without the box test (integrator stages may step past the boundary)."""
    return _christoffel(c, _point(c, p, check_box=False))


def _christoffel_with_derivative(c: Chart, p: np.ndarray) -> Tuple[MetricEval, np.ndarray, np.ndarray]:
    g, dg, ddg = _metric_derivatives(c, p, order=2)
    m = _invert(c, g)
    first = _first_kind(dg)
    gamma = _symmetrize_lower(np.einsum("kl,lij->kij", m.g_inv, first))
    dginv = -np.einsum("ka,mab,bl->mkl", m.g_inv, dg, m.g_inv)
    dfirst = 0.5 * (np.einsum("mijl->mlij", ddg) + np.einsum("mjil->mlij", ddg) - ddg)
    dgamma = np.einsum("mkl,lij->mkij", dginv, first) + np.einsum("kl,mlij->mkij", m.g_inv, dfirst)
    return m, gamma, _symmetrize_lower(dgamma)


def riemann_from_christoffel(gamma: np.ndarray, dgamma: np.ndarray) -> np.ndarray:
    """R[l,k,i,j] from Γ[k,i,j] and ∂Γ[m,k,i,j]; antisymmetric in (i, j) exactly."""
    a = np.einsum("iljk->lkij", dgamma) + np.einsum("lim,mjk->lkij", gamma, gamma)
    return a - np.swapaxes(a, 2, 3)


def curvature_at(c: Chart, p: Iterable[float]) -> Curvature:
    q = _point(c, p, check_box=True)
    m, gamma, dgamma = _christoffel_with_derivative(c, q)
    riemann = riemann_from_christoffel(gamma, dgamma)
    ricci = np.einsum("mimj->ij", riemann)
    scalar = float(np.einsum("ij,ij->", m.g_inv, ricci))
    return Curvature(riemann=riemann, ricci=ricci, scalar=scalar)


def apply_riemann(riemann: np.ndarray, x: np.ndarray, y: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Components of R(X, Y)Z."""
    return np.einsum("lkij,i,j,k->l", riemann, x, y, z)


def ricci_form(ricci: np.ndarray, x: np.ndarray, y: np.ndarray) -> float:
    return float(np.asarray(x) @ ricci @ np.asarray(y))


def scalar_calculus_at(c: Chart, p: Iterable[float], s: Expr) -> ScalarCalculus:
    q = _point(c, p, check_box=True)
    m, gamma = _christoffel(c, q)
    jet = eval_jet2(s, q, c.coords)
    hess = jet.hess - np.einsum("kij,k->ij", gamma, jet.grad)
    hess = 0.5 * (hess + hess.T)
    return ScalarCalculus(
        value=jet.value,
        grad=m.g_inv @ jet.grad,
        dvalue=jet.grad,
        hess=hess,
        lap=float(np.einsum("ij,ij->", m.g_inv, hess)),
        gradnorm2=float(jet.grad @ m.g_inv @ jet.grad),
    )


def vector_field_at(c: Chart, v: VectorFieldSpec, p: Iterable[float]) -> Tuple[np.ndarray, np.ndarray]:
    """Components v^k and Jacobian jac[k, i] = ∂_i v^k."""
    q = np.asarray(p, dtype=float).reshape(-1)
    values = np.zeros(c.dim)
    jac = np.zeros((c.dim, c.dim))
    for k, component in enumerate(v.components):
        values[k], jac[k] = eval_gradient(component, q, c.coords)
    return values, jac


def _nabla_field(c: Chart, v: VectorFieldSpec, q: np.ndarray) -> Tuple[MetricEval, np.ndarray]:
    """nabla[k, i] = (∇_{∂_i} v)^k."""
    m, gamma = _christoffel(c, q)
    values, jac = vector_field_at(c, v, q)
    return m, jac + np.einsum("kij,j->ki", gamma, values)


def covariant_derivative_at(c: Chart, v: VectorFieldSpec, direction: Iterable[float], p: Iterable[float]) -> np.ndarray:
    q = _point(c, p, check_box=True)
    _m, nabla = _nabla_field(c, v, q)
    return nabla @ np.asarray(direction, dtype=float)


def covariant_jacobian_at(c: Chart, v: VectorFieldSpec, p: Iterable[float]) -> np.ndarray:
    """All frame derivatives at once: column i is ∇_{∂_i} v."""
    q = _point(c, p, check_box=True)
    return _nabla_field(c, v, q)[1]


def lie_derivative_metric_at(c: Chart, zeta: VectorFieldSpec, p: Iterable[float]) -> np.ndarray:
    q = _point(c, p, check_box=True)
    m, nabla = _nabla_field(c, zeta, q)
    lowered = m.g @ nabla  # [j, i] = g(∂_j, ∇_i ζ)
    return lowered.T + lowered


def normalized_form(form: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Components divided by sqrt(|g_ii g_jj|): orthonormal-frame values for diagonal metrics."""
    scale = np.sqrt(np.abs(np.outer(np.diag(g), np.diag(g))))
    return form / scale


def sample_points(c: Chart, n: int, seed: int, margin: float = SAMPLE_MARGIN) -> np.ndarray:
    """Deterministic low-discrepancy points strictly inside the box.

    Unscrambled Halton points shifted modulo 1 by a seeded offset, then mapped
    into each interval shrunk by ``margin`` of its width on both sides.
    """
    halton = qmc.Halton(d=c.dim, scramble=False).random(n)
    shift = np.random.default_rng(seed).random(c.dim)
    unit = np.mod(halton + shift, 1.0)
    lo = np.array([a for a, _ in c.box])
    width = np.array([b - a for a, b in c.box])
    return lo + margin * width + unit * (1.0 - 2.0 * margin) * width
