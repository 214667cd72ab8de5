"""Reversal checks: continue back from the end of a branch to its start.

Points are compared through phase-invariant quantities (free scalars,
period, ``K`` and harmonic amplitudes) because the reverse run may use a
different mesh and phase reference than the forward one.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .branch import ContinuationBranch, StepConfig
from .collocation import OrbitContinuation, PeriodicOrbit
from .equilibria import _newton_fixed_p, continue_equilibria
from .harmonic import harmonic_coefficients

INVARIANT_KMAX = 4
# a labeled point this close to the start ends the reverse search
SEARCH_RADIUS = 1e-3


@dataclass
class Reversal:
    start: dict
    reached: dict | None
    deviation: float
    steps: int

    def within(self, tol: float) -> bool:
        return self.reached is not None and self.deviation < tol


def orbit_invariants(orbit: PeriodicOrbit, kmax: int = INVARIANT_KMAX) -> dict:
    """Scalars of ``orbit`` that do not depend on its mesh or time shift."""
    out = orbit.values()
    for name in list(out):
        if name.startswith(("a[", "b[")):
            del out[name]  # phase dependent
    coeffs = harmonic_coefficients(orbit, kmax)
    for (k, j), (a, b) in coeffs.coeffs.items():
        out[f"A[{k},{j}]"] = float(np.hypot(a, b))
    for j, m in coeffs.means.items():
        out[f"mean[{j}]"] = float(m)
    return out


def scaled_deviation(a: dict, b: dict) -> float:
    """Largest ``|a - b| / (1 + |a|)`` over the keys both dicts share."""
    keys = set(a) & set(b)
    if not keys:
        return np.inf
    return max(abs(a[k] - b[k]) / (1.0 + abs(a[k])) for k in keys)


def _transversal_key(free, tangent) -> str:
    """Free scalar with the largest tangent component, ``K`` excluded.

    ``K`` is a non-negative function of the coefficients, so it folds where
    they pass through zero.  Signed coefficients are usable here because the
    phase condition keeps the phase continuous within one run.
    """
    tail = np.abs(np.asarray(tangent)[-len(free):])
    names = [i for i, name in enumerate(free) if name != "K"] or list(range(len(free)))
    return free[max(names, key=lambda i: tail[i])]


def reverse_orbit_branch(cont: OrbitContinuation, branch: ContinuationBranch,
                         max_steps: int | None = None) -> Reversal:
    """Continue from the last point of ``branch`` with the tangent flipped
    until it returns to the start.

    The start is recognised by the value of the free scalar that changes
    fastest there.  The primary parameter is a poor choice near a fold in it
    (a cycle branch next to its Hopf point, for instance), where a step can
    pass the start without the parameter crossing its value.  The reached
    point is compared through phase-invariant quantities only.

    Bounds are dropped for the reverse run so that an end point lying on a
    bound does not stop it immediately.
    """
    first, last = branch[0], branch[-1]
    key = _transversal_key(cont.problem.free, first.tangent)
    target = first.values[key]
    ref = orbit_invariants(first.solution)
    saved = cont.config
    steps = max_steps if max_steps is not None else 3 * len(branch) + 20
    cont.config = replace(saved, labels={key: [target]}, bounds={}, max_steps=steps)

    def near(pt):
        return pt.label.startswith("UZ") and scaled_deviation(ref, orbit_invariants(pt.solution)) < SEARCH_RADIUS

    try:
        back = cont.run(last.solution, tangent=-last.tangent, stop=near)
    finally:
        cont.config = saved
    best, dev = None, np.inf
    for pt in back.labeled("UZ"):
        d = scaled_deviation(ref, orbit_invariants(pt.solution))
        if d < dev:
            best, dev = pt, d
    reached = orbit_invariants(best.solution) if best is not None else None
    return Reversal(ref, reached, float(dev), len(back) - 1)


def reverse_equilibrium_branch(system, free_param: str, branch: ContinuationBranch,
                               config: StepConfig | None = None) -> Reversal:
    """Reverse an equilibrium branch and re-solve at the start parameter value."""
    config = StepConfig() if config is None else config
    first, last = branch[0], branch[-1]
    k = system.param_index(free_param)
    p0 = first.solution.params[k]
    p_end = last.solution.params[k]
    direction = -np.sign(p_end - p0) if p_end != p0 else -1.0
    cfg = replace(config, bounds={}, max_steps=3 * len(branch) + 20)
    eq_end = last.solution
    back = continue_equilibria(system.with_params(**dict(zip(system.param_names, eq_end.params))),
                               free_param, eq_end.x, cfg, direction=direction, locate=False)
    ref = {"x": first.solution.x, free_param: p0}
    for a, b in zip(back.points[:-1], back.points[1:]):
        pa, pb = a.solution.params[k], b.solution.params[k]
        if (pa - p0) * (pb - p0) <= 0 and pa != pb:
            w = (p0 - pa) / (pb - pa)
            p = b.solution.params.copy()
            p[k] = p0
            x, _ = _newton_fixed_p(system, (1 - w) * a.solution.x + w * b.solution.x, p)
            dev = float(np.max(np.abs(x - ref["x"]) / (1.0 + np.abs(ref["x"]))))
            start = {f"x{i}": float(v) for i, v in enumerate(ref["x"])}
            reached = {f"x{i}": float(v) for i, v in enumerate(x)}
            return Reversal(start, reached, dev, len(back) - 1)
    return Reversal({}, None, np.inf, len(back) - 1)
