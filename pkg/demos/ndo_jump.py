"""Jump phenomenon of the forced nonlinear damped oscillator.

The shipped scenario raises an auxiliary forcing oscillator from its Hopf
point to a pure sinusoid and then continues the response in the forcing
frequency.  Between the two folds (``LP``) three periodic responses coexist.
This script runs the scenario into a temporary directory, prints the folds,
and classifies one response on each part of the branch with Floquet
multipliers from time integration.

Run from the repository root::

    python3 demos/ndo_jump.py
"""
import tempfile
from pathlib import Path

import numpy as np

from harmocont.config import load_config
from harmocont.files import orbit_payload
from harmocont.runner import run
from harmocont.verify import verify_solution

ROOT = Path(__file__).resolve().parents[1]

with tempfile.TemporaryDirectory() as tmp:
    cfg = load_config(ROOT / "scenarios" / "ndo-freq-response.toml", {"out_dir": tmp})
    result = run(cfg)
system, params = cfg.build_system()
branch = result.stages["frequency"].branches[0]
ratio = branch.column("beta") / params.omega0
amp = branch.column("A[1,2]")

folds = [i for i, pt in enumerate(branch.points) if pt.label == "LP"]
print(f"frequency branch: {len(branch)} points")
for i in folds:
    print(f"  fold at omega/omega0 = {ratio[i]:.5f}, A[1,2] = {amp[i]:.5f}")

# one response before the first fold along the branch, one between the folds
# and one after the second fold
first, second = folds
picks = {"before": max(first - 5, 0), "between": (first + second) // 2,
         "after": min(second + 5, len(branch) - 1)}
for name, i in picks.items():
    data = orbit_payload(branch[i].solution, "ndo", cfg.model_params, {}, system.state_names)
    report = verify_solution(data)
    # one multiplier is always 1 (time shift along the orbit)
    mods = sorted(np.abs(np.asarray(report.multipliers, dtype=complex)), reverse=True)
    print(f"{name:>7}: omega/omega0 = {ratio[i]:.5f}, A[1,2] = {amp[i]:.5f}, {report.stability}, "
          f"|multipliers| = {', '.join(f'{m:.4f}' for m in mods)}")

lo, hi = sorted(ratio[folds])
mid = 0.5 * (lo + hi)
crossings = int(np.sum(np.diff(np.sign(ratio - mid)) != 0))
print(f"responses coexisting at omega/omega0 = {mid:.5f}: {crossings}")
