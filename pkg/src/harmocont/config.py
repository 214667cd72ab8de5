"""Declarative run configurations.

A run configuration is a TOML file with a ``[model]`` table, a ``[solver]``
table and an ordered list of ``[[stage]]`` tables.  Every stage is checked
before anything is computed, including the rule that a periodic-orbit stage
lists exactly one more free scalar than it has integral constraints.
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .branch import StepConfig
from .collocation import M_COL, N_MESH, check_counts
from .errors import ConfigurationError
from .harmonic import FourierSpec, PeriodValue, make_kref
from .models import CATALOG, build_model

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

STAGE_KINDS = ("equilibrium", "cycle", "iso")
DIRECTIONS = {"forward": 1.0, "backward": -1.0, "both": 0.0}

_SOLVER_KEYS = {
    "mesh": int, "degree": int, "newton_tol": float, "newton_maxiter": int,
    "ds": float, "ds_min": float, "ds_max": float, "max_steps": int,
    "adapt_every": int, "max_turn": float, "jobs": int,
}
_STAGE_KEYS = {
    "name", "kind", "free", "start", "fourier", "labels", "bounds", "direction",
    "x0", "scan", "epsilon", "monitor", "max_steps", "ds", "ds_max", "adapt_every",
}


@dataclass
class SolverSettings:
    mesh: int = N_MESH
    degree: int = M_COL
    newton_tol: float = 1e-10
    newton_maxiter: int = 10
    ds: float = 0.05
    ds_min: float = 1e-7
    ds_max: float = 0.5
    max_steps: int = 300
    adapt_every: int = 5
    max_turn: float = 0.3
    jobs: int = 1


@dataclass
class StageConfig:
    name: str
    kind: str
    free: list
    start: str | None = None
    fourier: FourierSpec | None = None
    labels: dict = field(default_factory=dict)
    bounds: dict = field(default_factory=dict)
    direction: str = "forward"
    x0: list | None = None
    scan: dict | None = None
    epsilon: float = 1e-2
    monitor: list = field(default_factory=list)
    overrides: dict = field(default_factory=dict)

    def step_config(self, solver: SolverSettings) -> StepConfig:
        s = {**solver.__dict__, **self.overrides}
        return StepConfig(
            ds=s["ds"], ds_min=s["ds_min"], ds_max=s["ds_max"], max_steps=s["max_steps"],
            newton_tol=s["newton_tol"], newton_maxiter=s["newton_maxiter"],
            bounds={k: tuple(v) for k, v in self.bounds.items()},
            labels={k: list(v) for k, v in self.labels.items()},
            adapt_every=s["adapt_every"] if self.kind != "equilibrium" else 0,
            max_turn=s["max_turn"],
        )


@dataclass
class RunConfig:
    model: str
    model_params: dict
    system_params: dict
    solver: SolverSettings
    stages: list
    out_dir: Path
    raw: dict
    source: Path | None = None

    def stage(self, name: str) -> StageConfig:
        for st in self.stages:
            if st.name == name:
                return st
        raise ConfigurationError(f"no stage named {name!r}")

    @property
    def digest(self) -> str:
        """Hash of the effective configuration (output location excluded)."""
        raw = copy.deepcopy(self.raw)
        raw.pop("out_dir", None)
        blob = json.dumps(raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def build_system(self):
        """``(system, physical params)`` with the configured overrides applied."""
        system, params = build_model(self.model, self.model_params)
        if self.system_params:
            system = system.with_params(**self.system_params)
        return system, params


# --------------------------------------------------------------------------
# parsing


def load_config(path, overrides: dict | None = None) -> RunConfig:
    """Read and validate a TOML run configuration.

    ``overrides`` may set ``out_dir``, ``mesh``, ``degree`` and ``max_steps``
    (the command-line flags); they take precedence over the file.
    """
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read configuration {path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid TOML: {exc}") from None
    cfg = parse_config(raw, overrides, base=path.parent)
    cfg.source = path
    return cfg


def parse_config(raw: dict, overrides: dict | None = None, base: Path | None = None) -> RunConfig:
    raw = copy.deepcopy(raw)
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    solver_raw = raw.setdefault("solver", {})
    for key in ("mesh", "degree", "max_steps"):
        if key in overrides:
            solver_raw[key] = overrides[key]
    if "out_dir" in overrides:
        raw["out_dir"] = str(overrides["out_dir"])

    model = raw.get("model")
    if not isinstance(model, dict) or "name" not in model:
        raise ConfigurationError("configuration needs a [model] table with a 'name'")
    name = model["name"]
    if name not in CATALOG:
        raise ConfigurationError(f"unknown model {name!r}; available: {', '.join(sorted(CATALOG))}")
    params_cls = CATALOG[name][0]
    fields = set(params_cls.__dataclass_fields__)
    given = dict(model.get("params", {}))
    model_params = {k: float(v) for k, v in given.items() if k in fields}
    system_params = {k: float(v) for k, v in given.items() if k not in fields}

    solver = _parse_solver(solver_raw)
    out = Path(raw.get("out_dir", "out"))
    if base is not None and not out.is_absolute() and "out_dir" not in overrides:
        out = base / out
    stages_raw = raw.get("stage", [])
    if not stages_raw:
        raise ConfigurationError("configuration defines no [[stage]]")
    stages = [_parse_stage(s, i) for i, s in enumerate(stages_raw)]
    names = [s.name for s in stages]
    if len(set(names)) != len(names):
        raise ConfigurationError(f"stage names must be unique, got {names}")

    cfg = RunConfig(name, model_params, system_params, solver, stages, out, raw)
    system, _ = cfg.build_system()  # validates parameter names and domains
    for st in stages:
        validate_stage(st, system, names[: names.index(st.name)])
    return cfg


def _parse_solver(raw: dict) -> SolverSettings:
    unknown = set(raw) - set(_SOLVER_KEYS)
    if unknown:
        raise ConfigurationError(f"unknown [solver] keys: {sorted(unknown)}")
    try:
        values = {k: _SOLVER_KEYS[k](v) for k, v in raw.items()}
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"bad [solver] value: {exc}") from None
    s = SolverSettings(**values)
    if s.mesh < 2 or s.degree < 1:
        raise ConfigurationError(f"need mesh >= 2 and degree >= 1, got {s.mesh}, {s.degree}")
    if not 0 < s.ds_min <= s.ds <= s.ds_max:
        raise ConfigurationError("step sizes must satisfy 0 < ds_min <= ds <= ds_max")
    if s.max_steps < 1 or s.jobs < 1:
        raise ConfigurationError("max_steps and jobs must be positive")
    return s


def _pairs(value, what):
    try:
        pairs = [(int(k), int(j)) for k, j in value]
    except (TypeError, ValueError):
        raise ConfigurationError(f"{what} must be a list of [k, j] pairs, got {value!r}") from None
    return pairs


def parse_fourier(raw: dict | None) -> FourierSpec | None:
    """Build a :class:`FourierSpec` from ``{sin, cos, kref}``."""
    if raw is None:
        return None
    unknown = set(raw) - {"sin", "cos", "kref"}
    if unknown:
        raise ConfigurationError(f"unknown fourier keys: {sorted(unknown)}")
    kref = None
    if "kref" in raw:
        kr = dict(raw["kref"])
        kind = kr.pop("kind", None)
        if kind is None:
            raise ConfigurationError("kref table needs a 'kind'")
        kref = make_kref(kind, **kr)
    return FourierSpec(
        sin=_pairs(raw.get("sin", []), "fourier.sin"),
        cos=_pairs(raw.get("cos", []), "fourier.cos"),
        kref=kref,
    )


def _parse_stage(raw: dict, index: int) -> StageConfig:
    unknown = set(raw) - _STAGE_KEYS
    if unknown:
        raise ConfigurationError(f"stage {index}: unknown keys {sorted(unknown)}")
    name = raw.get("name", f"stage{index}")
    kind = raw.get("kind")
    if kind not in STAGE_KINDS:
        raise ConfigurationError(f"stage {name!r}: kind must be one of {STAGE_KINDS}, got {kind!r}")
    free = raw.get("free", [])
    if isinstance(free, str):
        free = [free]
    direction = raw.get("direction", "forward")
    if direction not in DIRECTIONS:
        raise ConfigurationError(f"stage {name!r}: direction must be one of {sorted(DIRECTIONS)}")
    overrides = {k: raw[k] for k in ("max_steps", "ds", "ds_max", "adapt_every") if k in raw}
    for k, v in raw.get("bounds", {}).items():
        if len(v) != 2 or not v[0] < v[1]:
            raise ConfigurationError(f"stage {name!r}: bounds for {k!r} must be [lo, hi] with lo < hi")
    return StageConfig(
        name=name,
        kind=kind,
        free=list(free),
        start=raw.get("start"),
        fourier=parse_fourier(raw.get("fourier")),
        labels={k: [float(x) for x in v] for k, v in raw.get("labels", {}).items()},
        bounds={k: [float(x) for x in v] for k, v in raw.get("bounds", {}).items()},
        direction=direction,
        x0=raw.get("x0"),
        scan=raw.get("scan"),
        epsilon=float(raw.get("epsilon", 1e-2)),
        monitor=_pairs(raw.get("monitor", []), "monitor"),
        overrides=overrides,
    )


# --------------------------------------------------------------------------
# validation


def expected_free(stage: StageConfig, system_params) -> list:
    """Names a stage must list as free, given its system parameters."""
    spec = stage.fourier
    slots = spec.slots() if spec is not None else []
    tail = ["T"] + slots
    if stage.kind == "cycle":
        return list(system_params) + tail + (["K"] if spec is not None and spec.kref is not None else [])
    return list(system_params) + tail


def validate_stage(stage: StageConfig, system, previous=()):
    """Check one stage against the system; raises :class:`ConfigurationError`."""
    where = f" in stage {stage.name!r}"
    if stage.kind == "equilibrium":
        if len(stage.free) != 1 or stage.free[0] not in system.param_names:
            raise ConfigurationError(
                f"equilibrium stage {stage.name!r} needs exactly one system parameter as 'free'"
            )
        if stage.x0 is None or len(stage.x0) != system.n:
            raise ConfigurationError(f"stage {stage.name!r}: x0 must list {system.n} state values")
        if stage.scan is not None:
            for k in stage.scan:
                if k not in system.param_names:
                    raise ConfigurationError(f"stage {stage.name!r}: cannot scan unknown parameter {k!r}")
        return

    spec = stage.fourier if stage.fourier is not None else FourierSpec()
    # the counting rule is checked first so that its message is what users see
    check_counts(spec.n_constraints, len(stage.free), where)
    spec.validate(system.n)
    if stage.kind == "iso" and spec.kref is None:
        raise ConfigurationError(f"iso stage {stage.name!r} needs a kref to pin")
    sys_params = [f for f in stage.free if f in system.param_names]
    need = 1 if stage.kind == "cycle" else 2
    if len(sys_params) != need:
        raise ConfigurationError(
            f"{stage.kind} stage {stage.name!r} frees {need} system parameter(s), got {sys_params}"
        )
    want = expected_free(stage, sys_params)
    if sorted(want) != sorted(stage.free):
        raise ConfigurationError(
            f"stage {stage.name!r}: free list {stage.free} does not match the constraints; "
            f"expected the names {want}"
        )
    if stage.start is None:
        raise ConfigurationError(f"stage {stage.name!r} needs a 'start'")
    ref = stage.start.split(":", 1)[0]
    if ref not in ("file",) and ref not in previous:
        raise ConfigurationError(
            f"stage {stage.name!r} starts from {stage.start!r}, which names no earlier stage"
        )
    allowed = set(stage.free) | set(system.param_names) | {"T"}
    for name in list(stage.labels) + list(stage.bounds):
        if name not in allowed and not name.startswith("A["):
            raise ConfigurationError(f"stage {stage.name!r}: unknown quantity {name!r} in labels/bounds")
    for name in stage.labels:
        if name not in stage.free:
            raise ConfigurationError(f"stage {stage.name!r}: labels need a free quantity, {name!r} is not free")


def is_period_pin(spec: FourierSpec | None) -> bool:
    return spec is not None and isinstance(spec.kref, PeriodValue)
