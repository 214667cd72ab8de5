"""Chart data export: per-curve CSV files plus a JSON manifest.

A chart manifest (TOML) names the axis columns and groups of branch files::

    [chart]
    name = "colpitts-iso-period"
    x = "R"
    y = "I0"

    [[curves]]
    group = "iso-period"
    files = "../runs/colpitts-iso-period/iso-period-*.csv"
    constant = "K"

Each matching branch file becomes one curve.  The constant column, when
given, is read from the first row and stored with the curve.
"""
from __future__ import annotations

import csv
import os
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import tomllib
from .errors import ConfigurationError, ExportError
from .files import BranchTable, fmt, read_branch

MANIFEST_FORMAT = "harmocont-chart/1"


@dataclass
class CurveGroup:
    group: str
    files: list
    constant: str | None = None


@dataclass
class ChartSpec:
    name: str
    axes: list
    groups: list = field(default_factory=list)
    labels: dict = field(default_factory=dict)


def load_chart(path) -> tuple[ChartSpec, Path]:
    """Parse a chart manifest; file patterns are resolved relative to it."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read chart manifest {path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid TOML: {exc}") from None
    chart = raw.get("chart", {})
    if "x" not in chart or "y" not in chart:
        raise ConfigurationError(f"{path}: [chart] needs 'x' and 'y' columns")
    axes = [chart["x"], chart["y"]] + ([chart["z"]] if "z" in chart else [])
    base = path.parent
    groups = []
    for c in raw.get("curves", []):
        pattern = c.get("files")
        if pattern is None:
            raise ConfigurationError(f"{path}: every [[curves]] entry needs 'files'")
        p = Path(pattern)
        root, pat = (Path(p.anchor), str(p.relative_to(p.anchor))) if p.is_absolute() else (base, pattern)
        files = sorted(root.glob(pat))
        groups.append(CurveGroup(c.get("group", pattern), files, c.get("constant")))
    spec = ChartSpec(chart.get("name", path.stem), axes, groups, dict(chart.get("labels", {})))
    return spec, base


def export_chart(spec: ChartSpec, out_dir) -> dict:
    """Write one CSV per curve and ``manifest.json`` into ``out_dir``.

    Raises :class:`ExportError` naming the first axis or constant column a
    branch file lacks.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    curves = []
    units = {}
    for group in spec.groups:
        for path in group.files:
            table: BranchTable = read_branch(path)
            cols = []
            for axis in spec.axes:
                if axis not in table.columns:
                    raise ExportError(f"{path}: chart axis column {axis!r} is missing")
                cols.append(table.column(axis))
            units.update(table.header.get("units", {}))
            constant = None
            if group.constant is not None:
                if group.constant in table.header.get("constant", {}):
                    constant = {group.constant: table.header["constant"][group.constant]}
                elif group.constant in table.columns:
                    constant = {group.constant: float(table.column(group.constant)[0])}
                else:
                    raise ExportError(f"{path}: constant column {group.constant!r} is missing")
            cid = f"{group.group}-{len([c for c in curves if c['group'] == group.group]) + 1:02d}"
            fname = f"{cid}.csv"
            data = np.column_stack(cols) if cols[0].size else np.zeros((0, len(cols)))
            with open(out_dir / fname, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(list(spec.axes) + ["curve"])
                for row in data:
                    w.writerow([fmt(v) for v in row] + [cid])
            curves.append({
                "id": cid,
                "group": group.group,
                "file": fname,
                "source": os.path.normpath(path),
                "points": int(data.shape[0]),
                "constant": constant,
            })
    manifest = {
        "format": MANIFEST_FORMAT,
        "name": spec.name,
        "axes": [{"name": a, "unit": units.get(a, ""), "label": spec.labels.get(a, a)} for a in spec.axes],
        "curves": curves,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")
    return manifest
