import json

import numpy as np
import pytest

from conftest import SCENARIOS

from harmocont.cli import EXIT_CONFIG, EXIT_OK, EXIT_VERIFY, main
from harmocont.config import load_config
from harmocont.errors import ExportError
from harmocont.export import export_chart, load_chart
from harmocont.files import orbit_payload, read_branch, read_solution, write_branch, write_solution
from harmocont.verify import verify_solution

SHORT_RUN = """
out_dir = "unused"

[model]
name = "colpitts"
params = {{ Q = 0.8, G = 2.0, gamma = 0.5, alpha_F = 1.0 }}

[solver]
mesh = 20
degree = 4
ds = 0.05
ds_max = 0.3
max_steps = {steps}
adapt_every = 5

[[stage]]
name = "equilibrium"
kind = "equilibrium"
free = "G"
x0 = [0.0, 0.0, 0.0]
direction = "backward"
bounds = {{ G = [0.5, 3.0] }}

[[stage]]
name = "primary"
kind = "cycle"
start = "equilibrium:HB"
epsilon = 1e-2
free = {free}
fourier = {{ sin = [[1, 2]], cos = [[1, 2]]{kref} }}
labels = {labels}
bounds = {{ G = [0.9, 3.0] }}
"""


def write_config(tmp_path, steps=40, free='["G", "T", "a[1,2]", "b[1,2]", "K"]',
                 kref=', kref = { kind = "harmonic", k = 1, j = 2 }', labels="{ K = [0.5, 1.0] }"):
    path = tmp_path / "short.toml"
    path.write_text(SHORT_RUN.format(steps=steps, free=free, kref=kref, labels=labels))
    return path


@pytest.fixture(scope="module")
def short_runs(tmp_path_factory):
    base = tmp_path_factory.mktemp("short")
    cfg = write_config(base)
    codes = [main(["run", str(cfg), "--out-dir", str(base / name)]) for name in ("first", "second")]
    return base, codes


def test_run_succeeds(short_runs, capsys):
    base, codes = short_runs
    assert codes == [EXIT_OK, EXIT_OK]
    assert (base / "first" / "primary.csv").exists()
    sols = sorted((base / "first" / "solutions").glob("*.json"))
    assert len(sols) >= 2


def test_reruns_are_bit_identical(short_runs):
    base, _ = short_runs
    first = sorted(p.relative_to(base / "first") for p in (base / "first").rglob("*")
                   if p.is_file() and p.suffix in (".csv", ".json") and p.name != "summary.json")
    assert first
    for rel in first:
        assert (base / "first" / rel).read_bytes() == (base / "second" / rel).read_bytes(), rel


def test_count_mismatch_exits_with_config_error(tmp_path, capsys):
    # phase + two Fourier rows = 3 constraints, but only 3 free quantities
    cfg = write_config(tmp_path, free='["G", "T", "a[1,2]"]', kref="", labels="{}")
    code = main(["run", str(cfg), "--out-dir", str(tmp_path / "out")])
    err = capsys.readouterr().err
    assert code == EXIT_CONFIG
    assert "require 4 free parameters" in err


def test_missing_config_file(tmp_path, capsys):
    assert main(["run", str(tmp_path / "nope.toml")]) == EXIT_CONFIG
    assert "cannot read" in capsys.readouterr().err


def test_shipped_scenarios_parse():
    for path in sorted(SCENARIOS.glob("*.toml")):
        cfg = load_config(path)
        assert cfg.stages


# -- files ----------------------------------------------------------------------


def test_branch_file_round_trip(tmp_path):
    rows = [{"step": 0, "label": "", "G": 0.1 + 0.2, "T": np.pi}, {"step": 1, "label": "UZ:K=1", "G": 1 / 3}]
    write_branch(tmp_path / "b.csv", {"stage": "x"}, rows)
    table = read_branch(tmp_path / "b.csv")
    assert table.columns == ["step", "label", "G", "T"]
    assert table.column("G")[0] == 0.1 + 0.2
    assert table.column("G")[1] == 1 / 3
    assert np.isnan(table.column("T")[1])
    assert table.labels() == ["", "UZ:K=1"]
    with pytest.raises(ExportError, match="'Q'"):
        table.column("Q")


def test_non_branch_file(tmp_path):
    (tmp_path / "x.csv").write_text("a,b\n1,2\n")
    with pytest.raises(ExportError):
        read_branch(tmp_path / "x.csv")


# -- export ---------------------------------------------------------------------


def _chart(tmp_path, body):
    path = tmp_path / "chart.toml"
    path.write_text(body)
    return path


def test_export_curves(short_runs, tmp_path):
    base, _ = short_runs
    manifest_path = _chart(tmp_path, f"""
[chart]
name = "short"
x = "R"
y = "I0"
z = "T"

[[curves]]
group = "primary"
files = "{(base / 'first').as_posix()}/primary.csv"
constant = "Q"
""")
    spec, _ = load_chart(manifest_path)
    manifest = export_chart(spec, tmp_path / "out")
    (curve,) = manifest["curves"]
    assert curve["constant"] == {"Q": 0.8}
    assert [a["name"] for a in manifest["axes"]] == ["R", "I0", "T"]
    assert [a["unit"] for a in manifest["axes"]] == ["ohm", "A", ""]
    table = read_branch(base / "first" / "primary.csv")
    lines = (tmp_path / "out" / curve["file"]).read_text().splitlines()
    assert lines[0] == "R,I0,T,curve"
    assert len(lines) - 1 == curve["points"] == len(table.rows)
    assert json.loads((tmp_path / "out" / "manifest.json").read_text()) == manifest


def test_export_empty_curve_set(tmp_path):
    path = _chart(tmp_path, '[chart]\nx = "R"\ny = "I0"\n\n[[curves]]\nfiles = "nothing-*.csv"\n')
    spec, _ = load_chart(path)
    manifest = export_chart(spec, tmp_path / "out")
    assert manifest["curves"] == []
    assert json.loads((tmp_path / "out" / "manifest.json").read_text())["curves"] == []


def test_export_missing_column(short_runs, tmp_path, capsys):
    base, _ = short_runs
    path = _chart(tmp_path, f"""
[chart]
x = "R"
y = "omega/omega0"

[[curves]]
files = "{(base / 'first').as_posix()}/primary.csv"
""")
    spec, _ = load_chart(path)
    with pytest.raises(ExportError, match="omega/omega0"):
        export_chart(spec, tmp_path / "out")
    assert main(["export", str(path), "--out-dir", str(tmp_path / "cli")]) == EXIT_CONFIG
    assert "omega/omega0" in capsys.readouterr().err


# -- verify ---------------------------------------------------------------------


def _first_solution(short_runs):
    base, _ = short_runs
    return sorted((base / "first" / "solutions").glob("*.json"))[0]


def test_verify_stable_orbit(short_runs, capsys):
    path = _first_solution(short_runs)
    report = verify_solution(read_solution(path))
    assert report.stability == "stable"
    assert report.return_map < 1e-5
    assert report.coefficient_interp < 1e-6 and report.coefficient_integrated < 1e-6
    assert main(["verify", str(path)]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["passed"] is True


def test_verify_tampered_orbit(short_runs, tmp_path):
    data = read_solution(_first_solution(short_runs))
    data["states"][0][1] += 1e-3
    path = tmp_path / "tampered.json"
    write_solution(path, data)
    report = verify_solution(read_solution(path))
    assert not report.passed
    assert report.return_map > 1e-5 or report.trajectory > 1e-5
    assert main(["verify", str(path)]) == EXIT_VERIFY


def test_verify_unreadable_file(tmp_path, capsys):
    (tmp_path / "bad.json").write_text("{not json")
    assert main(["verify", str(tmp_path / "bad.json")]) == EXIT_CONFIG
    assert main(["verify", str(tmp_path / "missing.json")]) == EXIT_CONFIG


def test_verify_flags_unstable_orbit(scenarios, tmp_path):
    run = scenarios["ndo-freq-response"]
    branch = run.result.stages["frequency"].branches[0]
    folds = [i for i, pt in enumerate(branch.points) if pt.label == "LP"]
    assert len(folds) == 2
    middle = branch.points[(folds[0] + folds[1]) // 2]
    cfg = run.config
    system, params = cfg.build_system()
    payload = orbit_payload(middle.solution, "ndo", params.to_dict(), {}, system.state_names)
    path = tmp_path / "middle.json"
    write_solution(path, payload)
    report = verify_solution(read_solution(path))
    assert report.stability == "unstable"
    assert report.diverges
    assert report.coefficient_interp is None and report.coefficient_integrated is None
    assert len(report.divergence) == 10
    # the orbit itself is accurate: the return map only fails over many periods
    assert report.return_map < 1e-5
    assert report.divergence[-1] > report.divergence[0]
