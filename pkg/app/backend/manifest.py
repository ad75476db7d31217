"""Manifest loading and validation.

A manifest is one YAML document::

    version: 1
    seed: 42
    defaults: {samples: 50, tol: 1.0e-8}
    charts:
      - {name: R, coords: [r], metric: ["1"], box: [[0.5, 3.0]]}
    constructions:
      - {name: cone, kind: sequential, factors: [R, T, P], f: "r", fbar: "r"}
    fields:
      - {name: rotation, construction: cone, blocks: [null, ["1"], null]}
    runs:
      - {command: killing, construction: cone, field: rotation}

Box bounds and numeric parameters may be constant expressions ("-pi", "pi/2").
Points and vectors are lists in total-chart order or mappings keyed by coordinate.
"""

import dataclasses
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import yaml

from app.backend.errors import ManifestError, SeqWarpError
from app.backend.expr import eval_value, free_variables, parse_expr
from app.backend.fields import BlockFieldSpec
from app.backend.geometry import Chart
from app.backend.spacetimes import IntervalChart, grw, standard_static
from app.backend.swp import AssemblyKind, SequentialWarpedProduct, assemble

logger = logging.getLogger(__name__)

COMMANDS: Tuple[str, ...] = (
    "describe",
    "curvature",
    "verify-theorems",
    "geodesic",
    "killing",
    "concircular",
    "spacetime-suite",
)
CONSTRUCTION_KINDS: Tuple[str, ...] = ("sequential", "multiply", "iterated", "standard_static", "grw")
FIELD_COMMANDS = ("killing", "concircular")
NUMERIC_PARAMS = ("tol", "tol_integrated", "dt", "t0", "t_end", "lambda", "numeric", "mu", "min_residual")


@dataclass(frozen=True)
class RunDefaults:
    samples: int = 50
    seed: int = 42
    tol: float = 1e-8
    tol_integrated: float = 1e-6
    dt: float = 1e-3
    t_end: float = 1.0


@dataclass(frozen=True)
class RunSpec:
    index: int
    command: str
    construction: str
    params: Dict[str, Any]


@dataclass
class Manifest:
    path: str
    version: int
    seed: int
    defaults: RunDefaults
    charts: Dict[str, Chart] = field(default_factory=dict)
    constructions: Dict[str, SequentialWarpedProduct] = field(default_factory=dict)
    fields: Dict[str, Tuple[str, BlockFieldSpec]] = field(default_factory=dict)
    runs: List[RunSpec] = field(default_factory=list)

    def field_for(self, name: str, construction: str) -> BlockFieldSpec:
        if name not in self.fields:
            raise ManifestError(f"unknown field '{name}'", self.path)
        owner, spec = self.fields[name]
        if owner != construction:
            raise ManifestError(f"field '{name}' belongs to construction '{owner}', not '{construction}'", self.path)
        return spec


def number(value: Any, where: str, path: Optional[str] = None) -> float:
    """A float from a YAML scalar; strings are parsed as constant expressions."""
    if isinstance(value, bool):
        raise ManifestError(f"{where}: expected a number, got {value!r}", path)
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            e = parse_expr(value)
        except SeqWarpError as exc:
            raise ManifestError(f"{where}: {exc}", path) from exc
        if free_variables(e):
            raise ManifestError(f"{where}: '{value}' is not a constant", path)
        return eval_value(e, [], ())
    raise ManifestError(f"{where}: expected a number, got {value!r}", path)


def integer(value: Any, where: str, path: Optional[str] = None) -> int:
    """An int from a YAML scalar; integral floats and constant expressions are accepted."""
    if isinstance(value, int) and not isinstance(value, bool):
        return value
    x = number(value, where, path)
    if not math.isfinite(x) or x != int(x):
        raise ManifestError(f"{where}: expected an integer, got {value!r}", path)
    return int(x)


def coordinate_vector(
    value: Any, coords: Sequence[str], where: str, path: Optional[str] = None, default: float = 0.0
) -> np.ndarray:
    """A point or tangent as a list in chart order or a {coord: value} mapping (missing → ``default``)."""
    if isinstance(value, dict):
        unknown = sorted(set(value) - set(coords))
        if unknown:
            raise ManifestError(f"{where}: unknown coordinates {unknown}", path)
        return np.array([number(value.get(c, default), f"{where}.{c}", path) for c in coords])
    if isinstance(value, (list, tuple)):
        if len(value) != len(coords):
            raise ManifestError(f"{where}: expected {len(coords)} entries ({', '.join(coords)})", path)
        return np.array([number(v, f"{where}[{i}]", path) for i, v in enumerate(value)])
    raise ManifestError(f"{where}: expected a list or mapping", path)


def _section(data: Dict[str, Any], key: str, path: str) -> List[Dict[str, Any]]:
    items = data.get(key) or []
    if not isinstance(items, list) or not all(isinstance(i, dict) for i in items):
        raise ManifestError(f"'{key}' must be a list of tables", path)
    return items


def _require(item: Dict[str, Any], key: str, where: str, path: str) -> Any:
    if key not in item:
        raise ManifestError(f"{where}: missing '{key}'", path)
    return item[key]


def _load_defaults(data: Dict[str, Any], seed: int, path: str) -> RunDefaults:
    raw = data.get("defaults") or {}
    if not isinstance(raw, dict):
        raise ManifestError("'defaults' must be a table", path)
    unknown = sorted(set(raw) - {f.name for f in dataclasses.fields(RunDefaults)} - {"seed"})
    if unknown:
        raise ManifestError(f"defaults: unknown keys {unknown}", path)
    defaults = RunDefaults(
        samples=integer(raw.get("samples", RunDefaults.samples), "defaults.samples", path),
        seed=seed,
        tol=number(raw.get("tol", RunDefaults.tol), "defaults.tol", path),
        tol_integrated=number(raw.get("tol_integrated", RunDefaults.tol_integrated), "defaults.tol_integrated", path),
        dt=number(raw.get("dt", RunDefaults.dt), "defaults.dt", path),
        t_end=number(raw.get("t_end", RunDefaults.t_end), "defaults.t_end", path),
    )
    if defaults.samples < 1:
        raise ManifestError("defaults.samples must be at least 1", path)
    if defaults.tol <= 0 or defaults.tol_integrated <= 0:
        raise ManifestError("tolerances must be positive", path)
    if defaults.dt <= 0:
        raise ManifestError("defaults.dt must be positive", path)
    return defaults


def _load_chart(item: Dict[str, Any], path: str) -> Chart:
    name = str(_require(item, "name", "chart", path))
    where = f"chart '{name}'"
    coords = _require(item, "coords", where, path)
    metric = _require(item, "metric", where, path)
    box = _require(item, "box", where, path)
    if not isinstance(coords, list) or not isinstance(metric, list) or not isinstance(box, list):
        raise ManifestError(f"{where}: coords, metric and box must be lists", path)
    bounds = []
    for i, pair in enumerate(box):
        if not isinstance(pair, list) or len(pair) != 2:
            raise ManifestError(f"{where}: box entry {i} must be [lo, hi]", path)
        bounds.append((number(pair[0], f"{where}.box[{i}]", path), number(pair[1], f"{where}.box[{i}]", path)))
    metric_entries = [[str(e) for e in row] if isinstance(row, list) else str(row) for row in metric]
    try:
        return Chart.build(name, [str(c) for c in coords], metric_entries, bounds)
    except SeqWarpError as exc:
        raise ManifestError(f"{where}: {exc}", path) from exc


def _chart_ref(charts: Dict[str, Chart], name: Any, where: str, path: str) -> Chart:
    if name not in charts:
        raise ManifestError(f"{where}: unknown chart '{name}'", path)
    return charts[name]


def _interval(item: Dict[str, Any], where: str, path: str) -> IntervalChart:
    raw = _require(item, "time", where, path)
    if not isinstance(raw, dict):
        raise ManifestError(f"{where}: 'time' must be a table with coord and interval", path)
    interval = _require(raw, "interval", f"{where}.time", path)
    if not isinstance(interval, list) or len(interval) != 2:
        raise ManifestError(f"{where}.time.interval must be [lo, hi]", path)
    lo = number(interval[0], f"{where}.time.interval", path)
    hi = number(interval[1], f"{where}.time.interval", path)
    try:
        sign = integer(raw.get("sign", -1), f"{where}.time.sign", path)
        return IntervalChart((lo, hi), coord=str(raw.get("coord", "t")), sign=sign)
    except SeqWarpError as exc:
        raise ManifestError(f"{where}: {exc}", path) from exc


def _load_construction(item: Dict[str, Any], charts: Dict[str, Chart], seed: int, path: str) -> SequentialWarpedProduct:
    name = str(_require(item, "name", "construction", path))
    where = f"construction '{name}'"
    kind = str(_require(item, "kind", where, path))
    if kind not in CONSTRUCTION_KINDS:
        raise ManifestError(f"{where}: unknown kind '{kind}' (expected one of {', '.join(CONSTRUCTION_KINDS)})", path)
    try:
        if kind in ("standard_static", "grw"):
            spatial = _require(item, "spatial", where, path)
            if not isinstance(spatial, list) or len(spatial) != 2:
                raise ManifestError(f"{where}: 'spatial' must name two charts", path)
            m1 = _chart_ref(charts, spatial[0], where, path)
            m2 = _chart_ref(charts, spatial[1], where, path)
            interval = _interval(item, where, path)
            if kind == "standard_static":
                return standard_static(
                    interval, m1, m2, str(_require(item, "f", where, path)),
                    str(_require(item, "fbar", where, path)), seed=seed, name=name,
                )
            return grw(
                interval, str(_require(item, "scale", where, path)), m1, m2,
                str(item.get("f", "1")), seed=seed, name=name,
            )
        factors = _require(item, "factors", where, path)
        if not isinstance(factors, list) or len(factors) != 3:
            raise ManifestError(f"{where}: 'factors' must name three charts", path)
        m1, m2, m3 = (_chart_ref(charts, n, where, path) for n in factors)
        fbar = item.get("fbar")
        f2 = item.get("f2")
        return assemble(
            AssemblyKind(kind), m1, m2, m3, str(_require(item, "f", where, path)),
            fbar=None if fbar is None else str(fbar), f2=None if f2 is None else str(f2),
            seed=seed, name=name,
        )
    except ManifestError:
        raise
    except SeqWarpError as exc:
        raise ManifestError(f"{where}: {exc}", path) from exc


def _load_field(item: Dict[str, Any], constructions: Dict[str, SequentialWarpedProduct], path: str) -> Tuple[str, str, BlockFieldSpec]:
    name = str(_require(item, "name", "field", path))
    where = f"field '{name}'"
    owner = str(_require(item, "construction", where, path))
    if owner not in constructions:
        raise ManifestError(f"{where}: unknown construction '{owner}'", path)
    s = constructions[owner]
    has_blocks, has_total = "blocks" in item, "total" in item
    if has_blocks == has_total:
        raise ManifestError(f"{where}: give exactly one of 'blocks' or 'total'", path)
    try:
        if has_total:
            comps = item["total"]
            if not isinstance(comps, list):
                raise ManifestError(f"{where}: 'total' must be a list", path)
            return name, owner, BlockFieldSpec.total_field(s, [str(c) for c in comps])
        blocks = item["blocks"]
        if not isinstance(blocks, list) or len(blocks) != 3:
            raise ManifestError(f"{where}: 'blocks' must hold three component lists (null for zero)", path)
        parts = [None if b is None else [str(c) for c in b] for b in blocks]
        return name, owner, BlockFieldSpec.lifted(s, *parts)
    except ManifestError:
        raise
    except SeqWarpError as exc:
        raise ManifestError(f"{where}: {exc}", path) from exc


def _load_run(index: int, item: Dict[str, Any], m: Manifest) -> RunSpec:
    where = f"run {index}"
    command = str(_require(item, "command", where, m.path))
    if command not in COMMANDS:
        raise ManifestError(f"{where}: unknown command '{command}'", m.path)
    construction = str(_require(item, "construction", where, m.path))
    if construction not in m.constructions:
        raise ManifestError(f"{where}: unknown construction '{construction}'", m.path)
    if command == "spacetime-suite" and m.constructions[construction].construction not in ("standard_static", "grw"):
        raise ManifestError(f"{where}: spacetime-suite needs a standard_static or grw construction", m.path)
    params = {k: v for k, v in item.items() if k not in ("command", "construction")}
    if command == "spacetime-suite" and m.constructions[construction].construction == "grw":
        _require(params, "u", where, m.path)
    if command == "geodesic" and "curve" not in params:
        _require(params, "point", where, m.path)
        _require(params, "velocity", where, m.path)
    for key in ("tol", "tol_integrated", "dt"):
        if key in params and number(params[key], f"{where}.{key}", m.path) <= 0:
            raise ManifestError(f"{where}: '{key}' must be positive", m.path)
    for key in NUMERIC_PARAMS:
        if key in params and not (key == "lambda" and params[key] == "estimate"):
            number(params[key], f"{where}.{key}", m.path)
    for key in ("samples", "seed"):
        if key in params:
            integer(params[key], f"{where}.{key}", m.path)
    if "samples" in params and integer(params["samples"], f"{where}.samples", m.path) < 1:
        raise ManifestError(f"{where}: 'samples' must be at least 1", m.path)
    if command in FIELD_COMMANDS:
        m.field_for(str(_require(params, "field", where, m.path)), construction)
    for name in params.get("conserve", []) or []:
        m.field_for(str(name), construction)
    return RunSpec(index=index, command=command, construction=construction, params=params)


def load_manifest(path: str, seed: Optional[int] = None) -> Manifest:
    """Parse and validate ``path``; every problem surfaces as ManifestError."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ManifestError(f"cannot read manifest: {exc}", path) from exc
    except yaml.YAMLError as exc:
        raise ManifestError(f"invalid YAML: {exc}", path) from exc
    if not isinstance(data, dict):
        raise ManifestError("manifest must be a mapping", path)

    version = integer(data.get("version", 1), "version", path)
    base_seed = integer(data.get("seed", RunDefaults.seed), "seed", path) if seed is None else int(seed)
    m = Manifest(path=path, version=version, seed=base_seed, defaults=_load_defaults(data, base_seed, path))

    for item in _section(data, "charts", path):
        chart = _load_chart(item, path)
        if chart.name in m.charts:
            raise ManifestError(f"chart '{chart.name}' is declared twice", path)
        m.charts[chart.name] = chart
    for item in _section(data, "constructions", path):
        s = _load_construction(item, m.charts, base_seed, path)
        if s.total.name in m.constructions:
            raise ManifestError(f"construction '{s.total.name}' is declared twice", path)
        m.constructions[s.total.name] = s
    for item in _section(data, "fields", path):
        name, owner, spec = _load_field(item, m.constructions, path)
        if name in m.fields:
            raise ManifestError(f"field '{name}' is declared twice", path)
        m.fields[name] = (owner, spec)
    for index, item in enumerate(_section(data, "runs", path)):
        m.runs.append(_load_run(index, item, m))

    logger.info(
        "loaded %s: %d charts, %d constructions, %d fields, %d runs",
        os.path.basename(path), len(m.charts), len(m.constructions), len(m.fields), len(m.runs),
    )
    return m
