"""Constant-amplitude curves of the Colpitts oscillator, step by step.

The script follows the origin in the gain G down to its Hopf point, starts
a small cycle there and continues it in G while tracking the first harmonic
of the base-emitter voltage y.  Orbits whose amplitude hits the requested
levels are then continued in the (G, Q) plane with that amplitude pinned,
and each curve is printed in circuit units (R in ohm, I0 in ampere).

Run from the repository root::

    python3 demos/colpitts_iso_amplitude.py
"""
import numpy as np

from harmocont import (
    ColpittsParams,
    FourierSpec,
    HarmonicAmplitude,
    StepConfig,
    colpitts_system,
    colpitts_to_circuit_plane,
    continue_equilibria,
    continue_iso,
    continue_with_harmonics,
    hopf_starter,
)

LEVELS = [1.0, 2.0, 3.0]

params = ColpittsParams(Q=0.8, G=2.0, gamma=0.5)
system = colpitts_system(params)

# 1. the origin loses stability at G = 1 through a Hopf bifurcation
eq = continue_equilibria(system, "G", np.zeros(3), StepConfig(ds=0.05, bounds={"G": (0.5, 3.0)}),
                         direction=-1.0)
hopf = eq.labeled("HB")[0].solution
print(f"Hopf point: G = {hopf.value:.10f}, omega = {hopf.omega:.10f}")

# 2. cycle branch with a[1,2], b[1,2] and K = A[1,2] among the unknowns
spec = FourierSpec(sin=[(1, 2)], cos=[(1, 2)], kref=HarmonicAmplitude(1, 2))
start, _ = hopf_starter(hopf, system, 1e-2)
step = StepConfig(ds=0.05, ds_max=0.3, max_steps=200, bounds={"G": (0.9, 12.0)}, labels={"K": LEVELS})
cycles = continue_with_harmonics(start, system.with_params(G=start.value("G")), spec, "G", step)
print(f"cycle branch: {len(cycles)} points, G up to {max(cycles.column('G')):.3f}")

# 3. one iso-amplitude curve per labeled orbit
iso_step = StepConfig(ds=0.05, ds_max=0.3, max_steps=150, bounds={"G": (0.9, 40.0), "Q": (0.2, 5.0)})
for pt in cycles.labeled("UZ"):
    orbit = pt.solution
    fixed = system.with_params(G=orbit.value("G"))
    curve = continue_iso(orbit, fixed, spec, ("Q", "G"), iso_step)
    R, I0 = colpitts_to_circuit_plane(curve.column("Q"), curve.column("G"), params)
    print(f"\nA[1,2] = {pt.values['K']:g}: {len(curve)} points")
    print(f"{'Q':>8} {'G':>9} {'R [ohm]':>10} {'I0 [mA]':>9}")
    for i in np.linspace(0, len(curve) - 1, 6).round().astype(int):
        q, g = curve[i].values["Q"], curve[i].values["G"]
        print(f"{q:8.4f} {g:9.4f} {R[i]:10.2f} {1e3 * I0[i]:9.4f}")
