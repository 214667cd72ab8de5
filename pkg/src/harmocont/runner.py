"""Execution of run configurations: stages, branch files and solution files."""
from __future__ import annotations

import json
import logging
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .branch import BranchPoint, ContinuationBranch
from .collocation import Mesh, PeriodicOrbit
from .config import DIRECTIONS, RunConfig, StageConfig, parse_config
from .equilibria import HopfPoint, continue_equilibria
from .errors import ConfigurationError, HarmocontError, NumericalError
from .files import orbit_from_payload, orbit_payload, read_solution, safe_name, write_branch, write_solution
from .harmonic import (
    PeriodValue,
    continue_iso,
    continue_with_harmonics,
    fill_slots,
    hopf_starter,
    starter_orbit,
    two_sided,
)
from .models import COLUMN_UNITS, derived_columns

log = logging.getLogger(__name__)

K_SNAP = 1e-8
_UZ = re.compile(r"^UZ:(?P<name>[^=]+)=(?P<value>.+)$")


@dataclass
class StageResult:
    name: str
    kind: str
    branches: list = field(default_factory=list)
    files: list = field(default_factory=list)
    solutions: list = field(default_factory=list)
    constants: list = field(default_factory=list)
    hopf_curve: list = field(default_factory=list)
    stalled: bool = False
    messages: list = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "files": self.files,
            "solutions": self.solutions,
            "branches": [
                {"points": len(b), "labels": [p.label for p in b if p.label], "message": b.message,
                 "stalled": b.stalled, "constant": c}
                for b, c in zip(self.branches, self.constants)
            ],
            "stalled": self.stalled,
        }


@dataclass
class RunResult:
    config: RunConfig
    stages: dict = field(default_factory=dict)
    status: str = "ok"
    error: str | None = None
    summary_path: Path | None = None

    @property
    def exit_code(self) -> int:
        return 0 if self.status == "ok" else 3


# --------------------------------------------------------------------------
# stage execution


def _join_equilibria(fwd: ContinuationBranch, bwd: ContinuationBranch) -> ContinuationBranch:
    out = ContinuationBranch(free=fwd.free)
    out.points = list(reversed(bwd.points[1:])) + list(fwd.points)
    out.stalled = fwd.stalled or bwd.stalled
    out.message = f"backward: {bwd.message}; forward: {fwd.message}"
    return out


def run_equilibrium(stage: StageConfig, system, cfg: RunConfig):
    step = stage.step_config(cfg.solver)
    free = stage.free[0]

    def follow(sys_):
        sign = DIRECTIONS[stage.direction]
        if sign == 0.0:
            fwd = continue_equilibria(sys_, free, stage.x0, step, direction=1.0)
            bwd = continue_equilibria(sys_, free, stage.x0, step, direction=-1.0)
            return _join_equilibria(fwd, bwd)
        return continue_equilibria(sys_, free, stage.x0, step, direction=sign)

    branch = follow(system)
    curve = []
    if stage.scan:
        (name, values), = stage.scan.items()
        for v in values:
            for pt in follow(system.with_params(**{name: float(v)})).labeled("HB"):
                hp: HopfPoint = pt.solution
                row = dict(zip(system.param_names, map(float, hp.equilibrium.params)))
                row.update({"omega": hp.omega, "T": hp.period})
                curve.append(row)
    return branch, curve


def _constant_of(orbit: PeriodicOrbit, spec, label: str | None) -> PeriodicOrbit:
    """Restart ``orbit`` under ``spec``; snap ``K`` to the label's target value."""
    orbit = orbit.copy()
    orbit.extras = {}
    out = fill_slots(orbit, spec, overwrite=True)
    m = _UZ.match(label or "")
    if m and spec.kref is not None:
        name, target = m["name"], float(m["value"])
        if name == "T" and isinstance(spec.kref, PeriodValue):
            target = target / spec.kref.scale
        elif name != "K":
            return out
        if abs(out.extras["K"] - target) <= K_SNAP:
            out.extras["K"] = target
    return out


def _run_cycle(stage, system, cfg, start):
    step = stage.step_config(cfg.solver)
    spec = stage.fourier
    param = [f for f in stage.free if f in system.param_names][0]
    sign = DIRECTIONS[stage.direction]
    args = (start, system, spec, param, step)
    if sign == 0.0:
        return two_sided(continue_with_harmonics, *args, monitor_pairs=stage.monitor)
    return continue_with_harmonics(*args, direction=sign, monitor_pairs=stage.monitor)


def _run_iso(stage, system, cfg, start):
    step = stage.step_config(cfg.solver)
    params = tuple(f for f in stage.free if f in system.param_names)
    sign = DIRECTIONS[stage.direction]
    args = (start, system, stage.fourier, params, step)
    if sign == 0.0:
        return two_sided(continue_iso, *args, monitor_pairs=stage.monitor)
    return continue_iso(*args, direction=sign, monitor_pairs=stage.monitor)


def _iso_worker(payload):
    raw, overrides, stage_name, start = payload
    cfg = parse_config(raw, overrides)
    system, _ = cfg.build_system()
    return _run_iso(cfg.stage(stage_name), system, cfg, start)


class Runner:
    """Runs the stages of a configuration in order and writes their artifacts."""

    def __init__(self, cfg: RunConfig, overrides: dict | None = None):
        self.cfg = cfg
        self.overrides = overrides or {}
        self.system, self.params = cfg.build_system()
        self.results: dict[str, StageResult] = {}
        self.out = Path(cfg.out_dir)

    # ---- start points
    def resolve(self, ref: str, many: bool = False):
        """Start objects named by ``ref``.

        ``file:<path>`` loads a solution file; ``<stage>:last`` is the final
        point of a stage; ``<stage>:<label>`` selects the points carrying
        exactly that label or, failing that, every label starting with it
        (the first one unless ``many``).
        """
        kind, _, rest = ref.partition(":")
        if kind == "file":
            path = Path(rest)
            if not path.is_absolute() and self.cfg.source is not None:
                path = self.cfg.source.parent / path
            try:
                data = read_solution(path)
            except (OSError, ValueError) as exc:
                raise ConfigurationError(f"cannot load start solution {path}: {exc}") from None
            pt = BranchPoint(orbit_from_payload(data), {}, label=data.get("label"))
            return [pt] if many else pt
        if kind not in self.results:
            raise ConfigurationError(f"start {ref!r}: stage {kind!r} has not run")
        branches = self.results[kind].branches
        if rest in ("last", "end"):
            pts = [b[-1] for b in branches]
        else:
            pts = [p for b in branches for p in b.labeled(rest or None)]
            exact = [p for p in pts if p.label == rest]
            pts = exact or pts
        if not pts:
            raise NumericalError(f"start {ref!r}: no matching point in stage {kind!r}")
        return pts if many else pts[0]

    def _start_orbit(self, stage: StageConfig, pt: BranchPoint) -> PeriodicOrbit:
        sol = pt.solution
        if isinstance(sol, HopfPoint):
            mesh = Mesh.uniform(self.cfg.solver.mesh, self.cfg.solver.degree)
            orbit, coeffs = hopf_starter(sol, self.system, stage.epsilon, mesh)
            return starter_orbit(orbit, coeffs, stage.fourier)
        if not isinstance(sol, PeriodicOrbit):
            raise ConfigurationError(f"stage {stage.name!r}: start point is not an orbit or Hopf point")
        return _constant_of(sol, stage.fourier, pt.label)

    # ---- artifacts
    def _rows(self, branch: ContinuationBranch, solution_names: dict) -> list:
        rows = []
        for i, pt in enumerate(branch.points):
            row = {"step": i, "label": pt.label or ""}
            row.update(pt.values)
            row.update(derived_columns(self.cfg.model, self.params, pt.values))
            row["solution"] = solution_names.get(i, "")
            rows.append(row)
        return rows

    def _write(self, res: StageResult, branch: ContinuationBranch, file_id: str, constant=None):
        names = {}
        sol_dir = self.out / "solutions"
        for i, pt in enumerate(branch.points):
            if pt.label and isinstance(pt.solution, PeriodicOrbit):
                sol_dir.mkdir(parents=True, exist_ok=True)
                fname = f"{file_id}-{i:04d}-{safe_name(pt.label)}.json"
                payload = orbit_payload(
                    pt.solution, self.cfg.model, self.cfg.model_params, self.cfg.system_params,
                    self.system.state_names,
                    {"label": pt.label, "stage": res.name, "branch": file_id, "step": i,
                     "config_hash": self.cfg.digest, "free": list(branch.free)},
                )
                write_solution(sol_dir / fname, payload)
                names[i] = f"solutions/{fname}"
                res.solutions.append(names[i])
        header = {
            "model": self.cfg.model,
            "config_hash": self.cfg.digest,
            "stage": res.name,
            "kind": res.kind,
            "branch": file_id,
            "free": list(branch.free),
            "units": COLUMN_UNITS,
            "message": branch.message,
            "stalled": branch.stalled,
        }
        if constant is not None:
            header["constant"] = constant
        path = self.out / f"{file_id}.csv"
        write_branch(path, header, self._rows(branch, names))
        res.files.append(path.name)

    def _write_curve(self, res: StageResult, rows: list):
        rows = [dict(r, **derived_columns(self.cfg.model, self.params, r)) for r in rows]
        rows = [{"step": i, "label": "HB", **r} for i, r in enumerate(rows)]
        header = {"model": self.cfg.model, "config_hash": self.cfg.digest, "stage": res.name,
                  "kind": "hopf-curve", "branch": f"{res.name}-hopf-curve", "units": COLUMN_UNITS}
        path = self.out / f"{res.name}-hopf-curve.csv"
        write_branch(path, header, rows)
        res.files.append(path.name)

    # ---- stages
    def run_stage(self, stage: StageConfig) -> StageResult:
        res = StageResult(stage.name, stage.kind)
        self.results[stage.name] = res
        if stage.kind == "equilibrium":
            branch, curve = run_equilibrium(stage, self.system, self.cfg)
            res.branches.append(branch)
            res.constants.append(None)
            self._write(res, branch, stage.name)
            if stage.scan:
                res.hopf_curve = curve
                self._write_curve(res, curve)
        elif stage.kind == "cycle":
            start = self._start_orbit(stage, self.resolve(stage.start))
            branch = _run_cycle(stage, self.system, self.cfg, start)
            res.branches.append(branch)
            res.constants.append(None)
            self._write(res, branch, stage.name)
        else:
            starts = [self._start_orbit(stage, pt) for pt in self.resolve(stage.start, many=True)]
            if self.cfg.solver.jobs > 1 and len(starts) > 1:
                jobs = [(self.cfg.raw, self.overrides, stage.name, s) for s in starts]
                with ProcessPoolExecutor(max_workers=self.cfg.solver.jobs) as pool:
                    branches = list(pool.map(_iso_worker, jobs))
            else:
                branches = [_run_iso(stage, self.system, self.cfg, s) for s in starts]
            for i, (s, branch) in enumerate(zip(starts, branches), 1):
                res.branches.append(branch)
                res.constants.append({"K": s.extras["K"]})
                self._write(res, branch, f"{stage.name}-{i:02d}", {"K": s.extras["K"]})
        res.stalled = any(b.stalled for b in res.branches)
        res.messages = [b.message for b in res.branches]
        return res

    def run(self) -> RunResult:
        self.out.mkdir(parents=True, exist_ok=True)
        result = RunResult(self.cfg, self.results)
        started = datetime.now(timezone.utc).isoformat()
        try:
            for stage in self.cfg.stages:
                log.info("stage %s (%s)", stage.name, stage.kind)
                res = self.run_stage(stage)
                if res.stalled:
                    result.status = "failed"
                    result.error = f"stage {stage.name!r}: continuation stalled ({'; '.join(res.messages)})"
                    break
        except ConfigurationError:
            raise
        except (HarmocontError, np.linalg.LinAlgError, FloatingPointError) as exc:
            result.status = "failed"
            result.error = f"{type(exc).__name__}: {exc}"
            log.error("run failed: %s", result.error)
        summary = {
            "model": self.cfg.model,
            "config": str(self.cfg.source) if self.cfg.source else None,
            "config_hash": self.cfg.digest,
            "status": result.status,
            "error": result.error,
            "started": started,
            "finished": datetime.now(timezone.utc).isoformat(),
            "stages": [r.summary() for r in self.results.values()],
        }
        result.summary_path = self.out / "summary.json"
        result.summary_path.write_text(json.dumps(summary, indent=1) + "\n")
        return result


def run(cfg: RunConfig, overrides: dict | None = None) -> RunResult:
    """Execute every stage of ``cfg``; see :class:`Runner`."""
    return Runner(cfg, overrides).run()
