"""End-to-end acceptance checks.

Each test records a one-line verdict (printed in the "acceptance criteria"
section of the pytest summary) before asserting.
"""
import time
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from conftest import SCENARIO_NAMES, SCENARIOS, report
from oracles import (
    colpitts_origin_eigenvalues,
    hysteresis_sweeps,
    integrated_coefficients,
    interpolant_coefficients,
)

from harmocont.branch import StepConfig
from harmocont.collocation import Mesh, PeriodicBVP, eval_orbit, newton_correct, orbit_from_function, pin
from harmocont.config import load_config, parse_config
from harmocont.dynsys import DynSystem
from harmocont.equilibria import continue_equilibria
from harmocont.errors import ConfigurationError
from harmocont.files import read_branch, read_solution
from harmocont.harmonic import (
    FourierSpec,
    harmonic_coefficients,
    harmonic_continuation,
    hopf_starter,
    iso_continuation,
)
from harmocont.models import (
    COLPITTS_CHART_REGION,
    ColpittsParams,
    NDOParams,
    colpitts_system,
    ndo_autonomous_system,
    ndo_forced_rhs,
)
from harmocont.reversal import reverse_equilibrium_branch, reverse_orbit_branch
from harmocont.verify import verify_solution

# --------------------------------------------------------------------------
# 1-2: Hopf points


def _colpitts_hopf():
    system = colpitts_system(ColpittsParams(Q=0.8, G=2.0, gamma=0.5, alpha_F=1.0))
    step = StepConfig(ds=0.05, ds_max=0.2, bounds={"G": (0.5, 3.0)})
    return continue_equilibria(system, "G", np.zeros(3), step, direction=-1.0)


def test_c1_colpitts_hopf_location():
    t0 = time.perf_counter()
    branch = _colpitts_hopf()
    elapsed = time.perf_counter() - t0
    hb = branch.labeled("HB")
    G_h = hb[0].solution.equilibrium.params[0] if hb else np.nan
    omega_oracle = np.max(colpitts_origin_eigenvalues(0.8, 1.0).imag)
    dG = abs(G_h - 1.0)
    passed = len(hb) == 1 and dG <= 1e-6 and elapsed <= 1.0
    report(1, passed, f"G_H={G_h:.12f} |dG|={dG:.1e} (<=1e-6), omega_H={hb[0].solution.omega if hb else np.nan:.10f} "
                      f"vs root oracle {omega_oracle:.10f}, {elapsed:.3f}s (<=1s)")
    assert len(hb) == 1
    assert dG <= 1e-6
    assert abs(hb[0].solution.omega - omega_oracle) < 1e-8
    assert elapsed <= 1.0


def _ndo_hopf():
    params = NDOParams()
    system = ndo_autonomous_system(params, alpha=-0.5)
    step = StepConfig(ds=0.05, ds_max=0.2, bounds={"alpha": (-1.0, 0.5)})
    return system, continue_equilibria(system, "alpha", np.zeros(4), step, direction=1.0)


def test_c2_damped_oscillator_hopf_location():
    system, branch = _ndo_hopf()
    hb = branch.labeled("HB")
    hp = hb[0].solution
    alpha_h = hp.equilibrium.params[system.param_index("alpha")]
    beta = system.param("beta")
    passed = len(hb) == 1 and abs(alpha_h) < 1e-8 and abs(hp.omega - beta) < 1e-8
    report(2, passed, f"alpha_H={alpha_h:.2e} (|.|<1e-8), omega_H-beta={hp.omega - beta:.2e} (|.|<1e-8)")
    assert len(hb) == 1
    assert abs(alpha_h) < 1e-8
    assert abs(hp.omega - beta) < 1e-8


# --------------------------------------------------------------------------
# 3: starter error is second order in epsilon


def _starter_error(hopf, system, eps):
    orbit, guess = hopf_starter(hopf, system, eps)
    conv = harmonic_coefficients(orbit, 1)
    err = 0.0
    for j in guess.means:
        err = max(err, abs(guess.means[j] - conv.means[j]))
        err = max(err, *np.abs(np.subtract(guess.coeffs[(1, j)], conv.coeffs[(1, j)])))
    return err


def test_c3_starter_second_order():
    cases = {
        "colpitts": (colpitts_system(), _colpitts_hopf().labeled("HB")[0].solution),
    }
    ndo_sys, ndo_branch = _ndo_hopf()
    cases["ndo"] = (ndo_sys, ndo_branch.labeled("HB")[0].solution)
    ratios = {}
    for name, (system, hopf) in cases.items():
        ratios[name] = _starter_error(hopf, system, 1e-2) / _starter_error(hopf, system, 1e-3)
    passed = all(50 <= r <= 200 for r in ratios.values())
    report(3, passed, "error ratio eps=1e-2 / eps=1e-3: "
           + ", ".join(f"{k} {v:.2f}" for k, v in ratios.items()) + " (in [50, 200])")
    for r in ratios.values():
        assert 50 <= r <= 200


# --------------------------------------------------------------------------
# 4: quadrature coefficients against an FFT of the interpolant


def _orbits(run):
    for stage in run.result.stages.values():
        for branch in stage.branches:
            for pt in branch:
                if hasattr(pt.solution, "mesh"):
                    yield pt.solution


def test_c4_fourier_oracle_equivalence(scenarios):
    worst, count = 0.0, 0
    for name in SCENARIO_NAMES:
        for orbit in _orbits(scenarios[name]):
            quad = harmonic_coefficients(orbit, 8)
            fft = interpolant_coefficients(orbit, 8)
            for j, (a, b) in fft.items():
                worst = max(worst, abs(quad.means[j] - a[0]))
                for k in range(1, 9):
                    qa, qb = quad.coeffs[(k, j)]
                    worst = max(worst, abs(qa - a[k]), abs(qb - b[k]))
            count += 1
    passed = count > 0 and worst < 1e-6
    report(4, passed, f"{count} orbits, k<=8: max |quadrature - FFT(4096)| = {worst:.2e} (<1e-6)")
    assert count > 0
    assert worst < 1e-6


# --------------------------------------------------------------------------
# 5: every stable labeled orbit passes the time-integration check


def test_c5_orbit_physical_validity(scenarios):
    worst, n_stable, n_unstable, failures = 0.0, 0, 0, []
    for name in SCENARIO_NAMES:
        run = scenarios[name]
        for rel in sorted((run.out / "solutions").glob("*.json")):
            rep = verify_solution(read_solution(rel))
            if rep.stability == "unstable":
                n_unstable += 1
                continue
            n_stable += 1
            worst = max(worst, rep.return_map)
            if rep.return_map >= 1e-5:
                failures.append(f"{name}/{rel.name}")
    passed = n_stable > 0 and not failures
    report(5, passed, f"{n_stable} stable labeled orbits, max return-map error {worst:.2e} (<1e-5); "
                      f"{n_unstable} unstable skipped")
    assert n_stable > 0
    assert not failures, failures


# --------------------------------------------------------------------------
# 6: iso branches keep the pinned quantity and cross the charted region

ISO_STAGES = {
    "colpitts-iso-a1": ("iso-a1", [1, 4, 7, 10, 13, 16, 19, 22, 25]),
    "colpitts-iso-period": ("iso-period", [6.3, 6.6, 6.9, 7.2, 7.5, 7.8, 8.1, 8.4, 8.7]),
    "colpitts-iso-ratio": ("iso-ratio", [3, 4, 5]),
    "colpitts-iso-a2": ("iso-a2", [1, 5, 10, 15]),
}


def _pinned_value(stage_cfg, orbit):
    spec = stage_cfg.fourier
    values = orbit.values()
    coeffs = harmonic_coefficients(orbit, max(k for k, _ in spec.sin + spec.cos) if spec.sin else 1)
    values.update({k: v for k, v in coeffs.values().items() if k != "T"})
    return spec.kref.value(values)


def _oracle_amplitudes(system, orbit, pairs):
    fft, err = integrated_coefficients(system, orbit, kmax=max(k for k, _ in pairs))
    quad = harmonic_coefficients(orbit, max(k for k, _ in pairs))
    rel = 0.0
    for k, j in pairs:
        a, b = fft[j]
        A_fft = np.hypot(a[k], b[k])
        A_quad = quad.amplitude(k, j)
        rel = max(rel, abs(A_fft - A_quad) / A_quad)
    return rel, err


def test_c6_iso_constraint_fidelity(scenarios):
    lines, ok = [], True
    for name, (stage_name, constants) in ISO_STAGES.items():
        run = scenarios[name]
        stage_cfg = run.config.stage(stage_name)
        res = run.result.stages[stage_name]
        system, _ = run.config.build_system()
        found = sorted(round(c["K"], 9) for c in res.constants)
        ok &= found == sorted(round(float(c), 9) for c in constants)
        worst_k, worst_amp, worst_ret, all_cross = 0.0, 0.0, 0.0, True
        for branch, const, fname in zip(res.branches, res.constants, res.files):
            K0 = const["K"]
            for pt in branch:
                worst_k = max(worst_k, abs(_pinned_value(stage_cfg, pt.solution) - K0))
            table = read_branch(run.out / fname)
            R, I0 = table.column("R"), table.column("I0")
            (r_lo, r_hi), (i_lo, i_hi) = COLPITTS_CHART_REGION["R"], COLPITTS_CHART_REGION["I0"]
            inside = (R > r_lo) & (R < r_hi) & (I0 > i_lo) & (I0 < i_hi)
            all_cross &= bool(np.any(inside))
            pairs = [(1, 2)] + ([(2, 2)] if stage_name in ("iso-ratio", "iso-a2") else [])
            for idx in np.linspace(0, len(branch) - 1, 3).round().astype(int):
                rel, err = _oracle_amplitudes(system, branch[idx].solution, pairs)
                worst_amp, worst_ret = max(worst_amp, rel), max(worst_ret, err)
        good = worst_k < 1e-8 and all_cross and worst_amp < 1e-4
        ok &= good
        lines.append(f"{stage_name}: {len(res.branches)} curves, max|K-K0|={worst_k:.1e}, "
                     f"region crossed={all_cross}, oracle amp rel dev={worst_amp:.1e}")
    report(6, ok, "; ".join(lines) + " (limits 1e-8, region, 1e-4)")
    assert ok, lines


# --------------------------------------------------------------------------
# 7: jump phenomenon of the forced damped oscillator


def test_c7_jump_phenomenon(scenarios):
    run = scenarios["ndo-freq-response"]
    table = read_branch(run.out / "frequency.csv")
    labels = table.labels()
    r = table.column("omega/omega0")
    i_lp = [i for i, lab in enumerate(labels) if lab == "LP"]
    folds = sorted(r[i_lp])
    params = NDOParams(**run.config.model_params)
    # multivalued: a frequency between the folds is crossed by three segments
    if len(folds) == 2:
        mid = 0.5 * (folds[0] + folds[1])
        crossings = int(np.sum(np.diff(np.sign(r - mid)) != 0))
    else:
        crossings = 0
    multivalued = crossings >= 3

    def factory(w):
        return ndo_forced_rhs(replace(params, omega=w))

    hyst = hysteresis_sweeps(factory, params.omega0, np.round(np.arange(0.60, 0.8501, 0.01), 10), 0.001)
    if len(folds) == 2:
        dev_up = abs(hyst.up_jump - folds[1]) / folds[1]
        dev_down = abs(hyst.down_jump - folds[0]) / folds[0]
    else:
        dev_up = dev_down = np.inf
    passed = (len(i_lp) == 2 and multivalued and bool(hyst.multivalued)
              and dev_up < 0.02 and dev_down < 0.02 and run.seconds <= 60)
    report(7, passed, f"folds at omega/omega0={', '.join(f'{f:.5f}' for f in folds)}; sweep jumps up "
                      f"{hyst.up_jump:.4f} ({dev_up:.2%}), down {hyst.down_jump:.4f} ({dev_down:.2%}) (<2%); "
                      f"{crossings} branch crossings of the mid-fold frequency, bistable sweep points "
                      f"{hyst.multivalued}; run {run.seconds:.1f}s (<=60s)")
    assert len(i_lp) == 2
    assert multivalued
    assert hyst.multivalued
    assert dev_up < 0.02 and dev_down < 0.02
    assert run.seconds <= 60


# --------------------------------------------------------------------------
# 8: convergence order of the collocation discretization


def _oscillator():
    def rhs(x, t, p):
        return np.stack([p[0] * x[0] - x[1], x[0] + p[0] * x[1]])

    def jac(x, t, p):
        z = np.zeros_like(x[0])
        return np.array([[p[0] + z, -1.0 + z], [1.0 + z, p[0] + z]])

    return DynSystem(2, rhs, [0.0], ("mu",), jac_x=jac, name="harmonic oscillator")


def _exact(s):
    return np.array([np.cos(2 * np.pi * s), np.sin(2 * np.pi * s)])


def oscillator_error(N, m):
    """Max interpolation error of the collocated harmonic oscillator.

    Unknowns: orbit, damping ``mu``, ``T`` and the cosine coefficient of
    the first state, pinned to 1 (the exact orbit is ``(cos, sin)`` with
    ``mu = 0``, ``T = 2 pi``).
    """
    system = _oscillator()
    mesh = Mesh.uniform(N, m)
    ref = orbit_from_function(_exact, 2 * np.pi, system, mesh)
    spec = FourierSpec(cos=[(1, 1)])
    problem = PeriodicBVP(system, spec.constraints(ref), ["mu", "T", "b[1,1]"])
    guess = orbit_from_function(lambda s: 1.01 * _exact(s + 0.003), 6.2, system, mesh,
                                extras={"b[1,1]": 1.0}).with_value("mu", 0.01)
    orbit = newton_correct(problem, guess, pin(problem, guess, "b[1,1]", 1.0)).orbit
    s = np.linspace(0.0, 1.0, 4001)
    return float(np.max(np.abs(eval_orbit(orbit, s) - _exact(s).T)))


C8 = {"orders": []}


@settings(max_examples=8, deadline=None, derandomize=True)
@given(m=st.integers(2, 5), N0=st.integers(8, 12))
def test_c8_discretization_convergence(m, N0):
    errs = [oscillator_error(N0 * 2**i, m) for i in range(3)]
    order = float(np.log2(errs[1] / errs[2]))
    C8["orders"].append((m, N0, order))
    bad = [o for o in C8["orders"] if abs(o[2] - (o[0] + 1)) > 0.5]
    default = oscillator_error(10, 4), oscillator_error(20, 4), oscillator_error(40, 4)
    order_default = float(np.log2(default[1] / default[2]))
    report(8, not bad and abs(order_default - 5) <= 0.5,
           f"m=4, N=10/20/40: observed order {order_default:.3f} (5 +- 0.5); "
           f"{len(C8['orders'])} drawn (m, N0) cases, worst |order-(m+1)| = "
           f"{max(abs(o[2] - o[0] - 1) for o in C8['orders']):.3f}")
    assert abs(order - (m + 1)) <= 0.5
    assert abs(order_default - 5) <= 0.5


# --------------------------------------------------------------------------
# 9: reversing a continuation returns to its start

STAGES = [(name, st_.name, st_.kind) for name in SCENARIO_NAMES
          for st_ in load_config(SCENARIOS / f"{name}.toml").stages]
C9 = {"worst": 0.0, "count": 0, "fail": []}


def _reverse(run, stage_name, choice, frac, steps, direction):
    cfg = run.config
    system, _ = cfg.build_system()
    stage = cfg.stage(stage_name)
    res = run.result.stages[stage_name]
    branch = res.branches[choice % len(res.branches)]
    inner = [i for i in range(1, len(branch) - 1) if branch[i].label is None] or [0]
    pt = branch[inner[int(frac * (len(inner) - 1))]]
    step = replace(stage.step_config(cfg.solver), max_steps=steps, labels={})
    if stage.kind == "equilibrium":
        eq = pt.solution
        sys_ = system.with_params(**dict(zip(system.param_names, eq.params)))
        fwd = continue_equilibria(sys_, stage.free[0], eq.x, step, direction=direction, locate=False)
        return reverse_equilibrium_branch(sys_, stage.free[0], fwd, step), len(fwd)
    params = [f for f in stage.free if f in system.param_names]
    if stage.kind == "cycle":
        cont, start = harmonic_continuation(pt.solution, system, stage.fourier, params[0], step, stage.monitor)
    else:
        cont, start = iso_continuation(pt.solution, system, stage.fourier, tuple(params), step, stage.monitor)
    fwd = cont.run(start, direction)
    return reverse_orbit_branch(cont, fwd), len(fwd)


@pytest.mark.parametrize("scenario,stage_name,kind", STAGES, ids=[f"{a}:{b}" for a, b, _ in STAGES])
@settings(max_examples=2, deadline=None, derandomize=True,
          suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(choice=st.integers(0, 100), frac=st.floats(0.0, 1.0), steps=st.integers(3, 10),
       direction=st.sampled_from([-1.0, 1.0]))
def test_c9_branch_reversibility(scenarios, scenario, stage_name, kind, choice, frac, steps, direction):
    rev, n = _reverse(scenarios[scenario], stage_name, choice, frac, steps, direction)
    C9["count"] += 1
    C9["worst"] = max(C9["worst"], rev.deviation)
    if not rev.within(1e-6):
        C9["fail"].append(f"{scenario}:{stage_name} ({rev.deviation:.1e})")
    report(9, not C9["fail"], f"{C9['count']} forward/reverse runs over {len(STAGES)} scenario stages, "
                              f"max scaled deviation {C9['worst']:.1e} (<1e-6)"
                              + (f"; failing: {C9['fail']}" if C9["fail"] else ""))
    assert n >= 2
    assert rev.within(1e-6), rev


# --------------------------------------------------------------------------
# 10: counting rule


def _config(n_a, n_b, n_free):
    sin = [[k, 2] for k in range(1, n_a + 1)]
    cos = [[k, 2] for k in range(1, n_b + 1)]
    names = ["G", "T"] + [f"a[{k},2]" for k, _ in sin] + [f"b[{k},2]" for k, _ in cos] + ["K"]
    extra = ["Q", "gamma", "alpha_F", "a[9,1]", "b[9,1]", "a[8,1]", "b[8,1]"]
    free = (names + extra)[:n_free]
    return {
        "model": {"name": "colpitts"},
        "stage": [
            {"name": "eq", "kind": "equilibrium", "free": "G", "x0": [0.0, 0.0, 0.0]},
            {"name": "cyc", "kind": "cycle", "start": "eq:HB", "free": free,
             "fourier": {"sin": sin, "cos": cos, "kref": {"kind": "period"}}},
        ],
    }


C10 = {"checked": 0, "wrong": []}


@settings(max_examples=150, deadline=None, derandomize=True)
@given(n_a=st.integers(0, 3), n_b=st.integers(0, 3), n_free=st.integers(0, 10))
def test_c10_counting_rule(n_a, n_b, n_free):
    required = n_a + n_b + 3
    try:
        parse_config(_config(n_a, n_b, n_free))
        accepted, message = True, ""
    except ConfigurationError as exc:
        accepted, message = False, str(exc)
    C10["checked"] += 1
    correct = accepted if n_free == required else (f"require {required} free parameters" in message)
    if not correct:
        C10["wrong"].append((n_a, n_b, n_free, message))
    report(10, not C10["wrong"], f"{C10['checked']} fuzzed configs over (n_a, n_b) in [0,3]^2: "
                                 f"{len(C10['wrong'])} misclassified")
    assert correct, message


def test_c10_exhaustive_grid():
    """Every (n_a, n_b) pair with the exact count and one off either side."""
    for n_a in range(4):
        for n_b in range(4):
            required = n_a + n_b + 3
            parse_config(_config(n_a, n_b, required))
            for bad in (required - 1, required + 1):
                with pytest.raises(ConfigurationError, match=f"require {required} free parameters"):
                    parse_config(_config(n_a, n_b, bad))
