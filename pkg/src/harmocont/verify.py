"""Independent checks of a stored periodic orbit by direct time integration.

The stored initial state is integrated over one period with an explicit
high-order Runge-Kutta scheme at tight tolerances.  The report compares the
return map, the whole trajectory and FFT coefficients against the stored
data, and classifies stability from the Floquet multipliers of the
variational equations.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .collocation import PeriodicOrbit, eval_orbit
from .dynsys import DynSystem, eval_rhs, jacobian_x
from .errors import NumericalError
from .files import orbit_from_payload, stored_coefficients
from .harmonic import fft_coefficients
from .models import build_model

RETURN_MAP_TOL = 1e-5
TRAJECTORY_TOL = 1e-5
COEFF_TOL = 1e-6
FFT_SAMPLES = 4096
MULTIPLIER_MARGIN = 1e-6
RTOL = 1e-12
ATOL = 1e-12


@dataclass
class VerifyReport:
    return_map: float
    trajectory: float
    multipliers: list
    stability: str
    coefficient_interp: float | None = None
    coefficient_integrated: float | None = None
    divergence: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def diverges(self) -> bool:
        return self.stability == "unstable"

    @property
    def passed(self) -> bool:
        ok = self.return_map < RETURN_MAP_TOL and self.trajectory < TRAJECTORY_TOL
        if self.coefficient_interp is not None:
            ok = ok and self.coefficient_interp < COEFF_TOL
        if self.coefficient_integrated is not None:
            ok = ok and self.coefficient_integrated < COEFF_TOL
        return bool(ok)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["multipliers"] = [[float(np.real(m)), float(np.imag(m))] for m in self.multipliers]
        d["passed"] = self.passed
        d["diverges"] = self.diverges
        return d


def system_for(data: dict) -> DynSystem:
    """Rebuild the dynamical system a solution file was computed with."""
    system, _ = build_model(data["model"], data.get("model_params", {}))
    return system.with_params(**dict(zip(data["param_names"], data["params"])))


def integrate_period(system: DynSystem, x0, period: float, periods: int = 1, dense=True):
    def f(t, x):
        return eval_rhs(system, x, t)

    sol = solve_ivp(f, (0.0, periods * period), np.asarray(x0, dtype=float), method="DOP853",
                    rtol=RTOL, atol=ATOL, dense_output=dense)
    if not sol.success:
        raise NumericalError(f"time integration failed: {sol.message}")
    return sol


def floquet_multipliers(system: DynSystem, x0, period: float) -> np.ndarray:
    """Eigenvalues of the monodromy matrix along the orbit through ``x0``."""
    n = system.n

    def f(t, u):
        x = u[:n]
        Y = u[n:].reshape(n, n)
        return np.concatenate([eval_rhs(system, x, t), (jacobian_x(system, x, t) @ Y).ravel()])

    u0 = np.concatenate([np.asarray(x0, dtype=float), np.eye(n).ravel()])
    sol = solve_ivp(f, (0.0, period), u0, method="DOP853", rtol=1e-10, atol=1e-12)
    if not sol.success:
        raise NumericalError(f"variational integration failed: {sol.message}")
    return np.linalg.eigvals(sol.y[n:, -1].reshape(n, n))


def classify(multipliers) -> str:
    """``stable``, ``unstable`` or ``marginal`` after removing the trivial multiplier."""
    mu = np.asarray(multipliers)
    rest = np.delete(mu, np.argmin(np.abs(mu - 1.0)))
    if rest.size == 0:
        return "stable"
    top = np.max(np.abs(rest))
    if top < 1.0 - MULTIPLIER_MARGIN:
        return "stable"
    if top > 1.0 + MULTIPLIER_MARGIN:
        return "unstable"
    return "marginal"


def verify_orbit(orbit: PeriodicOrbit, system: DynSystem, stored: dict | None = None,
                 kmax: int = 8, periods: int = 10) -> VerifyReport:
    """Check ``orbit`` against direct integration of ``system``.

    ``stored`` maps ``(k, j)`` to stored ``(a, b)`` coefficients (``k = 0``
    for means); when omitted, coefficient checks are skipped.
    """
    T = orbit.period
    x0 = orbit.states[0]
    scale = 1.0 + np.max(np.abs(orbit.states))
    sol = integrate_period(system, x0, T)
    xT = sol.sol(T)
    return_map = float(np.max(np.abs(xT - x0)) / scale)
    traj = sol.sol(orbit.mesh.points * T).T
    trajectory = float(np.max(np.abs(traj - orbit.states)) / scale)

    mu = floquet_multipliers(system, x0, T)
    stability = classify(mu)
    report = VerifyReport(return_map, trajectory, list(mu), stability)

    if stability == "unstable":
        # follow the drift away from the orbit over several periods
        long = integrate_period(system, x0, T, periods=periods)
        report.divergence = [
            float(np.max(np.abs(long.sol(p * T) - x0)) / scale) for p in range(1, periods + 1)
        ]
        report.notes.append("orbit is unstable; integration diverges, coefficient check skipped")
        return report
    if stored:
        s = np.arange(FFT_SAMPLES) / FFT_SAMPLES
        interp = eval_orbit(orbit, s)
        integ = sol.sol(s * T).T
        dev_i, dev_t = 0.0, 0.0
        for j in range(1, orbit.n + 1):
            ai, bi = fft_coefficients(interp[:, j - 1], kmax)
            at, bt = fft_coefficients(integ[:, j - 1], kmax)
            for k in range(0, kmax + 1):
                if (k, j) not in stored:
                    continue
                a, b = stored[(k, j)]
                dev_i = max(dev_i, abs(ai[k] - a), abs(bi[k] - b))
                dev_t = max(dev_t, abs(at[k] - a), abs(bt[k] - b))
        report.coefficient_interp = float(dev_i)
        report.coefficient_integrated = float(dev_t)
    if stability == "marginal":
        report.notes.append("a nontrivial Floquet multiplier lies on the unit circle")
    return report


def verify_solution(data: dict, periods: int = 10) -> VerifyReport:
    """Verify the contents of a solution file (see :func:`files.read_solution`)."""
    orbit = orbit_from_payload(data)
    return verify_orbit(orbit, system_for(data), stored_coefficients(data),
                        kmax=int(data["coefficients"]["kmax"]), periods=periods)
