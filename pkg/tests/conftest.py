import sys
import time
from dataclasses import dataclass
from pathlib import Path

import pytest

from harmocont.config import load_config
from harmocont.runner import run

ROOT = Path(__file__).resolve().parents[1]
SCENARIOS = ROOT / "scenarios"
SCENARIO_NAMES = [
    "colpitts-iso-a1",
    "colpitts-iso-period",
    "colpitts-iso-ratio",
    "colpitts-iso-a2",
    "ndo-freq-response",
    "ndo-amplitude-response",
]

sys.path.insert(0, str(Path(__file__).parent))

# lines collected by the acceptance tests, printed after the run
ACCEPTANCE_LINES: dict = {}


def report(criterion: int, passed: bool, detail: str):
    ACCEPTANCE_LINES[criterion] = f"criterion {criterion:2d}: {'PASS' if passed else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])


@dataclass
class ScenarioRun:
    name: str
    config: object
    result: object
    seconds: float

    @property
    def out(self) -> Path:
        return Path(self.config.out_dir)


class ScenarioCache:
    """Runs each shipped scenario at most once per test session."""

    def __init__(self, base: Path):
        self.base = base
        self.runs = {}

    def __getitem__(self, name) -> ScenarioRun:
        if name not in self.runs:
            cfg = load_config(SCENARIOS / f"{name}.toml", {"out_dir": self.base / name})
            t0 = time.perf_counter()
            result = run(cfg)
            self.runs[name] = ScenarioRun(name, cfg, result, time.perf_counter() - t0)
        return self.runs[name]


@pytest.fixture(scope="session")
def scenarios(tmp_path_factory):
    return ScenarioCache(tmp_path_factory.mktemp("scenarios"))
