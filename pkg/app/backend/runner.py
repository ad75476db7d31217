"""Execute manifest runs and assemble the report."""

import csv
import dataclasses
import json
import logging
import os
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from app.backend.database import ReportStore
from app.backend.errors import ManifestError, SeqWarpError
from app.backend.expr import to_source
from app.backend.fields import (
    BlockFieldSpec,
    GeodesicState,
    Trajectory,
    concircular_check,
    concircular_suite,
    conformal_factors,
    conserved_along_geodesic,
    geodesic_condition_residuals,
    integrate_geodesic,
    killing_check,
    lie_decomposition_check,
    sample_curve,
)
from app.backend.geometry import curvature_at, metric_at, sample_points
from app.backend.manifest import Manifest, RunSpec, coordinate_vector, integer, load_manifest, number
from app.backend.spacetimes import grw_concircular_check
from app.backend.swp import (
    THEOREM_CASES,
    THEOREMS,
    BlockVector,
    SequentialWarpedProduct,
    aux_scalars_at,
    compare_oracle,
    einstein_check,
    scalar_relation_residual,
    scalar_relation_terms,
    summarize,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_INPUT = 2

REPORT_NAME = "report.json"
CURVATURE_POINTS = 3
NEGATIVE_CONTROL_MARGIN = 0.1


@dataclass
class RunResult:
    index: int
    command: str
    construction: str
    passed: bool
    details: Dict[str, Any] = field(default_factory=dict)
    artifacts: List[str] = field(default_factory=list)
    error: Optional[str] = None


def jsonable(obj: Any) -> Any:
    """Plain JSON types from dataclasses, numpy values, tuples and nested containers."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    return obj


def _fmt(x: float) -> str:
    return f"{x:.17g}"


class Runner:
    def __init__(self, manifest: Manifest, out_dir: str, timestamps: bool = True) -> None:
        self.manifest = manifest
        self.out_dir = out_dir
        self.timestamps = timestamps
        self._commands: Dict[str, Callable[[RunSpec, SequentialWarpedProduct], RunResult]] = {
            "describe": self._describe,
            "curvature": self._curvature,
            "verify-theorems": self._verify_theorems,
            "geodesic": self._geodesic,
            "killing": self._killing,
            "concircular": self._concircular,
            "spacetime-suite": self._spacetime_suite,
        }

    # Settings
    def _int(self, run: RunSpec, key: str, default: int) -> int:
        return integer(run.params.get(key, default), f"run {run.index}.{key}", self.manifest.path)

    def _float(self, run: RunSpec, key: str, default: float) -> float:
        return number(run.params.get(key, default), f"run {run.index}.{key}", self.manifest.path)

    def _common(self, run: RunSpec) -> Dict[str, Any]:
        d = self.manifest.defaults
        return {
            "samples": self._int(run, "samples", d.samples),
            "seed": self._int(run, "seed", self.manifest.seed),
            "tol": self._float(run, "tol", d.tol),
        }

    def _vector(self, s: SequentialWarpedProduct, run: RunSpec, value: Any, key: str) -> np.ndarray:
        return coordinate_vector(value, s.total.coords, f"run {run.index}.{key}", self.manifest.path)

    def execute(self, only: Optional[Sequence[str]] = None) -> Dict[str, Any]:
        started = time.perf_counter()
        results: List[RunResult] = []
        for run in self.manifest.runs:
            if only and run.command not in only:
                continue
            s = self.manifest.constructions[run.construction]
            try:
                result = self._commands[run.command](run, s)
            except SeqWarpError as exc:
                logger.error("run %d (%s on %s) failed: %s", run.index, run.command, run.construction, exc)
                result = RunResult(run.index, run.command, run.construction, passed=False, error=f"{type(exc).__name__}: {exc}")
            logger.info("run %d %s on %s: %s", run.index, run.command, run.construction, "pass" if result.passed else "FAIL")
            results.append(result)

        report: Dict[str, Any] = {
            "manifest": os.path.basename(self.manifest.path),
            "version": self.manifest.version,
            "seed": self.manifest.seed,
            "passed": all(r.passed for r in results),
            "errors": sum(1 for r in results if r.error),
            "runs": [jsonable(r) for r in results],
        }
        if self.timestamps:
            report["created_at"] = datetime.now(timezone.utc).isoformat()
            report["wall_time"] = time.perf_counter() - started
        return report

    # Commands
    def _describe(self, run: RunSpec, s: SequentialWarpedProduct) -> RunResult:
        details = {
            "kind": s.kind,
            "construction": s.construction,
            "dims": list(s.dims),
            "blocks": {str(i): list(s.factor(i).coords) for i in (1, 2, 3)},
            "f": to_source(s.f),
            "fbar": to_source(s.fbar),
            "f2": None if s.f2 is None else to_source(s.f2),
            "display_coords": list(s.display_coords()),
            "params": {k: to_source(v) for k, v in s.params},
            "metric_diagonal": [to_source(s.total.metric[i][i]) for i in range(s.total.dim)],
        }
        return RunResult(run.index, run.command, run.construction, passed=True, details=details)

    def _display_matrix(self, s: SequentialWarpedProduct, mat: np.ndarray) -> np.ndarray:
        order = list(s.display_order or range(s.total.dim))
        return mat[np.ix_(order, order)]

    def _curvature(self, run: RunSpec, s: SequentialWarpedProduct) -> RunResult:
        c = self._common(run)
        raw_points = run.params.get("points")
        if raw_points is None:
            points = list(sample_points(s.total, CURVATURE_POINTS, c["seed"]))
        else:
            points = [self._vector(s, run, p, "points") for p in raw_points]
        entries = []
        worst = 0.0
        for p in points:
            curv = curvature_at(s.total, p)
            aux = aux_scalars_at(s, p)
            aux_fiber = aux_scalars_at(s, p, fbar_coefficient="fiber")
            terms = scalar_relation_terms(s, p)
            worst = max(worst, terms.residual)
            entries.append(
                {
                    "point": s.to_display(p),
                    "scalar": curv.scalar,
                    "ricci": self._display_matrix(s, curv.ricci),
                    "aux": {
                        "fstar": aux.fstar,
                        "fbarstar": aux.fbarstar,
                        "fbarstar_fiber": aux_fiber.fbarstar,
                        "u": aux.u,
                        "ubar": aux.ubar,
                    },
                    "scalar_relation": terms,
                }
            )
        details = {"points": entries, "scalar_relation_max": worst}
        return RunResult(run.index, run.command, run.construction, passed=worst < c["tol"], details=jsonable(details))

    def _verify_theorems(self, run: RunSpec, s: SequentialWarpedProduct) -> RunResult:
        c = self._common(run)
        cases = []
        adjudications: List[str] = []
        for theorem in THEOREMS:
            for case in THEOREM_CASES[theorem]:
                verdict = summarize(compare_oracle(s, theorem, case, samples=c["samples"], seed=c["seed"]), c["tol"])
                cases.append(verdict)
                if len(verdict.variants) > 1:
                    line = (
                        f"{theorem} case {case}: matching {list(verdict.matching) or 'none'}, winner {verdict.winner}; "
                        + ", ".join(f"{v.variant} max rel {v.max_rel:.3e}" for v in verdict.variants)
                    )
                    adjudications.append(line)
                    logger.info(line)

        points = sample_points(s.total, c["samples"], c["seed"])
        scalar_max = max(scalar_relation_residual(s, p) for p in points)
        raw_lam = run.params.get("lambda", "estimate")
        lam = raw_lam if raw_lam == "estimate" else self._float(run, "lambda", 0.0)
        einstein = einstein_check(s, lam, samples=c["samples"], seed=c["seed"], tol=c["tol"])
        adjudications.append(f"einstein item 4: {einstein.adjudication}")

        passed = all(v.passed for v in cases) and scalar_max < c["tol"] and einstein.consistent
        details = {
            "samples": c["samples"],
            "tolerance": c["tol"],
            "cases": cases,
            "scalar_relation": {"max_residual": scalar_max, "passed": scalar_max < c["tol"]},
            "einstein": einstein,
            "adjudications": adjudications,
        }
        return RunResult(run.index, run.command, run.construction, passed=passed, details=jsonable(details))

    def _trajectory(self, run: RunSpec, s: SequentialWarpedProduct) -> Trajectory:
        d = self.manifest.defaults
        dt = self._float(run, "dt", d.dt)
        t0 = self._float(run, "t0", 0.0)
        t_end = self._float(run, "t_end", t0 + d.t_end)
        if "curve" in run.params:
            curve = run.params["curve"]
            if not isinstance(curve, list):
                raise ManifestError(f"run {run.index}.curve must be a list of expressions in t", self.manifest.path)
            return sample_curve(s, [str(e) for e in curve], t0, t_end, dt)
        init = GeodesicState(
            time=t0,
            point=self._vector(s, run, run.params["point"], "point"),
            velocity=self._vector(s, run, run.params["velocity"], "velocity"),
        )
        return integrate_geodesic(s, init, t_end, dt)

    def _write_trajectory_csv(self, s: SequentialWarpedProduct, name: str, traj: Trajectory, residuals: Any) -> str:
        os.makedirs(self.out_dir, exist_ok=True)
        path = os.path.join(self.out_dir, f"{name}.csv")
        coords = list(s.display_coords())
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            param = "tau" if "t" in coords else "t"  # static space-times own a coordinate named t
            writer.writerow([param] + coords + [f"v_{c}" for c in coords] + ["speed2", "res1", "res2", "res3"])
            for k, state in enumerate(traj.states):
                row = [state.time] + s.to_display(state.point) + s.to_display(state.velocity)
                row += [traj.speed2[k], residuals.res1[k], residuals.res2[k], residuals.res3[k]]
                writer.writerow([_fmt(float(x)) for x in row])
        return path

    def _geodesic(self, run: RunSpec, s: SequentialWarpedProduct) -> RunResult:
        tol = self._float(run, "tol_integrated", self.manifest.defaults.tol_integrated)
        traj = self._trajectory(run, s)
        residuals = geodesic_condition_residuals(s, traj)
        name = str(run.params.get("name", f"{run.construction}_run{run.index}"))
        csv_path = self._write_trajectory_csv(s, name, traj, residuals)

        block_ok = residuals.max_block() < tol
        total_ok = residuals.max_total() < tol
        drift = traj.speed2_drift()
        conserved = {}
        for field_name in run.params.get("conserve", []) or []:
            zeta = self.manifest.field_for(str(field_name), run.construction)
            conserved[str(field_name)] = conserved_along_geodesic(s, zeta, traj).drift
        expect = str(run.params.get("expect", "geodesic"))
        if expect == "geodesic":
            passed = block_ok and total_ok and drift < tol and all(v < tol for v in conserved.values())
        elif expect == "non-geodesic":
            passed = residuals.max_block() > NEGATIVE_CONTROL_MARGIN and not total_ok
        else:
            raise ManifestError(f"run {run.index}: expect must be 'geodesic' or 'non-geodesic'", self.manifest.path)
        details = {
            "expect": expect,
            "states": len(traj.states),
            "dt": traj.dt,
            "stop_reason": traj.stop_reason,
            "exit_time": traj.exit_time,
            "speed2_drift": drift,
            "max_res1": max(residuals.res1, default=0.0),
            "max_res2": max(residuals.res2, default=0.0),
            "max_res3": max(residuals.res3, default=0.0),
            "max_total": residuals.max_total(),
            "block_total_equivalent": block_ok == total_ok,
            "conserved_drift": conserved,
            "tolerance": tol,
        }
        return RunResult(
            run.index, run.command, run.construction, passed=passed and block_ok == total_ok,
            details=jsonable(details), artifacts=[os.path.basename(csv_path)],
        )

    def _killing(self, run: RunSpec, s: SequentialWarpedProduct) -> RunResult:
        c = self._common(run)
        zeta = self.manifest.field_for(str(run.params["field"]), run.construction)
        report = killing_check(s, zeta, samples=c["samples"], seed=c["seed"], tol=c["tol"])
        expect = str(run.params.get("expect", "killing"))
        passed = report.consistent and report.killing == (expect == "killing")
        details: Dict[str, Any] = {"expect": expect, "killing": report}
        if "numeric" in run.params:
            target = self._float(run, "numeric", 0.0)
            details["numeric_gap"] = abs(report.numeric_max - target)
            passed = passed and details["numeric_gap"] < c["tol"]
        if run.params.get("conformal"):
            conformal = conformal_factors(s, zeta, samples=c["samples"], seed=c["seed"], tol=c["tol"])
            details["conformal"] = conformal
            passed = passed and all(r.passed for r in conformal.residuals.values())
        decompositions = []
        for k, item in enumerate(run.params.get("decompositions", []) or []):
            if not isinstance(item, dict):
                raise ManifestError(f"run {run.index}.decompositions[{k}] must be a table", self.manifest.path)
            x = BlockVector.from_total(s, self._vector(s, run, item.get("x"), "x"))
            y = BlockVector.from_total(s, self._vector(s, run, item.get("y"), "y"))
            p = self._vector(s, run, item.get("point"), "point")
            decomposition = lie_decomposition_check(s, zeta, x, y, p)
            decompositions.append(decomposition)
            passed = passed and decomposition.residual < c["tol"]
        if decompositions:
            details["decompositions"] = decompositions
        return RunResult(run.index, run.command, run.construction, passed=passed, details=jsonable(details))

    def _concircular(self, run: RunSpec, s: SequentialWarpedProduct) -> RunResult:
        c = self._common(run)
        zeta = self.manifest.field_for(str(run.params["field"]), run.construction)
        report = concircular_check(s, zeta, samples=c["samples"], seed=c["seed"], tol=c["tol"])
        expect = str(run.params.get("expect", "concircular"))
        if expect == "concircular":
            passed = report.concircular and report.conformal_residual < c["tol"]
        else:
            floor = self._float(run, "min_residual", c["tol"])
            passed = not report.concircular and report.max_residual > floor
        details: Dict[str, Any] = {
            "expect": expect,
            "samples": report.samples,
            "max_residual": report.max_residual,
            "conformal_residual": report.conformal_residual,
            "mu_min": min(report.mu),
            "mu_max": max(report.mu),
            "concircular": report.concircular,
        }
        if "mu" in run.params:
            target = self._float(run, "mu", 0.0)
            details["mu_gap"] = max(abs(m - target) for m in report.mu)
            passed = passed and details["mu_gap"] < c["tol"]
        if run.params.get("suite"):
            suite = concircular_suite(s, zeta, samples=c["samples"], seed=c["seed"], tol=c["tol"])
            details["suite"] = {
                "warpings_constant": suite.warpings_constant,
                "nonzero_blocks": suite.nonzero_blocks,
                "factors_concircular": {k: r.concircular for k, r in suite.factors.items()},
                "subchecks": suite.subchecks,
            }
            passed = passed and suite.passed
        return RunResult(run.index, run.command, run.construction, passed=passed, details=jsonable(details))

    def _spacetime_suite(self, run: RunSpec, s: SequentialWarpedProduct) -> RunResult:
        c = self._common(run)
        points = sample_points(s.total, c["samples"], c["seed"])
        dets = [metric_at(s.total, p).det for p in points]
        lorentzian = all(d < 0.0 for d in dets)
        details: Dict[str, Any] = {"construction": s.construction, "lorentzian": lorentzian, "max_det": max(dets)}
        passed = lorentzian
        if s.construction == "grw":
            report = grw_concircular_check(s, str(run.params["u"]), samples=c["samples"], seed=c["seed"], tol=c["tol"])
            details["grw_concircular"] = {
                "inner_constant": report.inner_constant,
                "inner_gradient": report.inner_gradient,
                "udot_matches": report.udot_matches,
                "udot_gap": report.udot_gap,
                "hypotheses_hold": report.hypotheses_hold,
                "concircular": report.total.concircular,
                "max_residual": report.total.max_residual,
                "mu_gap": report.mu_gap,
                "interval_concircular": report.interval.concircular,
                "consistent": report.consistent,
            }
            passed = passed and report.consistent
            if "expect" in run.params:
                passed = passed and report.total.concircular == (str(run.params["expect"]) == "concircular")
        else:
            time_field = BlockFieldSpec.lifted(s, None, None, ["1"])
            killing = killing_check(s, time_field, samples=c["samples"], seed=c["seed"], tol=c["tol"])
            details["static_killing"] = killing
            passed = passed and killing.killing
        return RunResult(run.index, run.command, run.construction, passed=passed, details=jsonable(details))


def write_report(report: Dict[str, Any], out_dir: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, REPORT_NAME)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(report, indent=2, sort_keys=True))
        fh.write("\n")
    return path


def check(manifest_path: str) -> int:
    """Validate only."""
    try:
        load_manifest(manifest_path)
    except SeqWarpError as exc:
        logger.error("%s", exc)
        return EXIT_INPUT
    return EXIT_OK


def run(
    manifest_path: str,
    only: Optional[Sequence[str]] = None,
    out_dir: str = "out",
    seed: Optional[int] = None,
    timestamps: bool = True,
    db_path: Optional[str] = None,
) -> int:
    try:
        manifest = load_manifest(manifest_path, seed=seed)
    except SeqWarpError as exc:
        logger.error("%s", exc)
        return EXIT_INPUT

    report = Runner(manifest, out_dir, timestamps=timestamps).execute(only)
    path = write_report(report, out_dir)
    logger.info("report written to %s", path)
    if db_path:
        store = ReportStore(db_path)
        try:
            run_id = store.add_report(report, created_at=report.get("created_at"))
            logger.info("archived as run %d in %s", run_id, db_path)
        finally:
            store.close()
    if report["errors"]:
        return EXIT_INPUT
    return EXIT_OK if report["passed"] else EXIT_FAILED
