"""Branch files (CSV with a JSON header line) and labeled-solution files (JSON).

Numbers are written with 17 significant digits so that a file read back
reproduces the computed doubles exactly.
"""
from __future__ import annotations

import csv
import io
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .collocation import Mesh, PeriodicOrbit
from .errors import ExportError
from .harmonic import harmonic_coefficients

BRANCH_FORMAT = "harmocont-branch/1"
SOLUTION_FORMAT = "harmocont-solution/1"
SOLUTION_KMAX = 8


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    v = float(value)
    if math.isnan(v):
        return "nan"
    return f"{v:.17g}"


@dataclass
class BranchTable:
    """In-memory content of a branch file."""

    header: dict
    columns: list
    rows: list = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        if name not in self.columns:
            raise ExportError(f"column {name!r} not found; available: {', '.join(self.columns)}")
        i = self.columns.index(name)
        return np.array([float(r[i]) if r[i] not in ("", None) else np.nan for r in self.rows])

    def labels(self) -> list:
        i = self.columns.index("label")
        return [r[i] for r in self.rows]


def branch_columns(points, leading=("step", "label")) -> list:
    """Union of the value names of ``points`` in order of first appearance."""
    seen = {}
    for pt in points:
        for name in pt:
            seen.setdefault(name, None)
    return list(leading) + [c for c in seen if c not in leading]


def write_branch(path, header: dict, rows: list) -> BranchTable:
    """Write ``rows`` (dicts) under ``header``; missing values become ``nan``.

    The first line is ``#`` followed by the header as compact JSON, which
    includes the column list; the second line holds the column names.
    """
    columns = branch_columns(rows)
    header = {"format": BRANCH_FORMAT, **header, "columns": columns}
    buf = io.StringIO()
    buf.write("# " + json.dumps(header, sort_keys=True, separators=(",", ":")) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    table_rows = []
    for row in rows:
        out = []
        for c in columns:
            v = row.get(c, math.nan)
            out.append(v if isinstance(v, str) else fmt(v))
        writer.writerow(out)
        table_rows.append(out)
    Path(path).write_text(buf.getvalue())
    return BranchTable(header, columns, table_rows)


def read_branch(path) -> BranchTable:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ExportError(f"cannot read branch file {path}: {exc}") from None
    lines = text.splitlines()
    if not lines or not lines[0].startswith("#"):
        raise ExportError(f"{path} is not a branch file (missing header line)")
    try:
        header = json.loads(lines[0][1:])
    except json.JSONDecodeError as exc:
        raise ExportError(f"{path}: malformed header: {exc}") from None
    reader = csv.reader(lines[1:])
    try:
        columns = next(reader)
    except StopIteration:
        raise ExportError(f"{path}: no column line") from None
    rows = [r for r in reader]
    for r in rows:
        if len(r) != len(columns):
            raise ExportError(f"{path}: row with {len(r)} fields, expected {len(columns)}")
    return BranchTable(header, columns, rows)


# --------------------------------------------------------------------------
# labeled solutions


def safe_name(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9.+-]+", "_", label).strip("_")


def orbit_payload(orbit: PeriodicOrbit, model: str, model_params: dict, system_params: dict,
                  state_names=(), meta: dict | None = None) -> dict:
    coeffs = harmonic_coefficients(orbit, SOLUTION_KMAX)
    return {
        "format": SOLUTION_FORMAT,
        "model": model,
        "model_params": dict(model_params),
        "system_params": dict(system_params),
        "param_names": list(orbit.param_names),
        "params": [float(v) for v in orbit.params],
        "state_names": list(state_names),
        "period": float(orbit.period),
        "mesh": {"breakpoints": [float(v) for v in orbit.mesh.breakpoints], "degree": orbit.mesh.degree},
        "states": [[float(v) for v in row] for row in orbit.states],
        "extras": {k: float(v) for k, v in orbit.extras.items()},
        "coefficients": {
            "kmax": SOLUTION_KMAX,
            "means": {str(j): float(v) for j, v in coeffs.means.items()},
            "values": {f"{k},{j}": [float(a), float(b)] for (k, j), (a, b) in coeffs.coeffs.items()},
        },
        **(meta or {}),
    }


def write_solution(path, payload: dict):
    Path(path).write_text(json.dumps(payload, indent=1) + "\n")


def read_solution(path) -> dict:
    """Load a solution file; raises ``OSError`` or ``ValueError`` when unusable."""
    with open(path) as fh:
        data = json.load(fh)
    if data.get("format") != SOLUTION_FORMAT:
        raise ValueError(f"{path} is not a solution file")
    for key in ("params", "param_names", "period", "mesh", "states"):
        if key not in data:
            raise ValueError(f"{path}: missing field {key!r}")
    return data


def orbit_from_payload(data: dict) -> PeriodicOrbit:
    mesh = Mesh(np.array(data["mesh"]["breakpoints"]), int(data["mesh"]["degree"]))
    return PeriodicOrbit(
        mesh,
        np.array(data["states"], dtype=float),
        float(data["period"]),
        np.array(data["params"], dtype=float),
        tuple(data["param_names"]),
        dict(data.get("extras", {})),
    )


def stored_coefficients(data: dict) -> dict:
    """``{(k, j): (a, b)}`` plus means under key ``(0, j)``."""
    c = data["coefficients"]
    out = {}
    for key, (a, b) in c["values"].items():
        k, j = map(int, key.split(","))
        out[(k, j)] = (a, b)
    for j, m in c["means"].items():
        out[(0, int(j))] = (m, 0.0)
    return out
