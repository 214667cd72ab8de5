"""Pseudo-arclength continuation of equilibria with Hopf detection."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .branch import BranchPoint, ContinuationBranch, StepConfig
from .dynsys import DynSystem, eval_rhs, jacobian_p, jacobian_x
from .errors import ConvergenceError, InvalidStartError, LocalizationError, SingularMatrixError
from .linalg import Spectrum, eigenvalues, lu_solve

log = logging.getLogger(__name__)

TOL_EQ = 1e-10
TOL_HOPF = 1e-10
HOPF_SENTINEL_CAP = 1e3


@dataclass
class EquilibriumPoint:
    x: np.ndarray
    params: np.ndarray
    spectrum: Spectrum


@dataclass
class HopfPoint:
    equilibrium: EquilibriumPoint
    omega: float
    eigenvector: np.ndarray
    param: str

    @property
    def period(self) -> float:
        return 2 * np.pi / self.omega

    @property
    def value(self) -> float:
        """Value of the continuation parameter at the bifurcation."""
        return float(self.equilibrium.params[self._index])

    _index: int = -1


def hopf_test(spectrum: Spectrum) -> float:
    """Real part of the complex pair nearest the imaginary axis.

    Without a complex pair the result is the least-stable real eigenvalue,
    capped in magnitude, so that a sign change between two points is only
    trusted after checking that both carry a pair.
    """
    pairs = spectrum.complex_pairs()
    if pairs.size:
        return float(pairs[np.argmin(np.abs(pairs.real))].real)
    lead = float(np.max(spectrum.real)) if len(spectrum) else -1.0
    return float(np.clip(lead, -HOPF_SENTINEL_CAP, HOPF_SENTINEL_CAP))


def _newton_fixed_p(system, x, p, tol=TOL_EQ, maxiter=10):
    x = np.array(x, dtype=float)
    for it in range(maxiter + 1):
        g = eval_rhs(system, x, 0.0, p)
        if np.max(np.abs(g), initial=0.0) < tol:
            return x, it
        try:
            dx = lu_solve(jacobian_x(system, x, 0.0, p), -g)
        except SingularMatrixError as exc:
            raise ConvergenceError(f"singular Jacobian: {exc}", residual=float(np.max(np.abs(g))),
                                   iterations=it) from exc
        x = x + dx
        if np.max(np.abs(dx), initial=0.0) < tol * max(1.0, np.max(np.abs(x), initial=0.0)):
            g = eval_rhs(system, x, 0.0, p)
            if np.max(np.abs(g), initial=0.0) < 1e3 * tol:
                return x, it + 1
    raise ConvergenceError(
        "equilibrium Newton did not converge", residual=float(np.max(np.abs(g))), iterations=maxiter
    )


def _make_point(system, x, p, k, arclength=0.0, step=0.0, iterations=0, label=None):
    spec = eigenvalues(jacobian_x(system, x, 0.0, p))
    eq = EquilibriumPoint(np.array(x), np.array(p), spec)
    values = {
        system.param_names[k]: float(p[k]),
        "hopf": hopf_test(spec),
        "pair": bool(spec.complex_pairs().size),
        "norm": float(np.linalg.norm(x)),
    }
    return BranchPoint(eq, values, label=label, arclength=arclength, step=step, iterations=iterations)


def _arclength_newton(system, u_pred, u_prev, tangent, ds, k, tol, maxiter):
    n = system.n
    u = u_pred.copy()
    p = system.params.copy()
    last = np.inf
    growth = 0
    for it in range(1, maxiter + 1):
        p[k] = u[n]
        g = eval_rhs(system, u[:n], 0.0, p)
        arc = tangent @ (u - u_prev) - ds
        F = np.concatenate([g, [arc]])
        J = np.zeros((n + 1, n + 1))
        J[:n, :n] = jacobian_x(system, u[:n], 0.0, p)
        J[:n, n] = jacobian_p(system, u[:n], 0.0, p, [k])[:, 0]
        J[n] = tangent
        du = lu_solve(J, -F)
        u = u + du
        res = np.max(np.abs(F))
        growth = growth + 1 if res > last else 0
        if growth >= 2:
            break
        last = res
        if np.max(np.abs(du)) < tol * max(1.0, np.max(np.abs(u))):
            p[k] = u[n]
            if np.max(np.abs(eval_rhs(system, u[:n], 0.0, p)), initial=0.0) < 1e2 * tol:
                return u, it
    raise ConvergenceError("arclength Newton failed", residual=float(last), iterations=maxiter)


def continue_equilibria(
    system: DynSystem,
    free_param: str,
    x0,
    config: StepConfig | None = None,
    p0=None,
    direction: float = 1.0,
    locate: bool = True,
) -> ContinuationBranch:
    """Follow equilibria of ``system`` in ``free_param`` and label Hopf points.

    ``direction`` sets the sign of the initial parameter change.
    """
    config = StepConfig() if config is None else config
    k = system.param_index(free_param)
    p = system.params.copy() if p0 is None else np.array(p0, dtype=float)
    n = system.n
    try:
        x, _ = _newton_fixed_p(system, x0, p, tol=config.newton_tol, maxiter=config.newton_maxiter)
    except ConvergenceError as exc:
        raise InvalidStartError(
            f"starting point is not within Newton reach of an equilibrium: {exc}",
            residual=exc.residual,
        ) from exc

    branch = ContinuationBranch(free=(free_param,))
    branch.points.append(_make_point(system, x, p, k))
    u = np.concatenate([x, [p[k]]])
    # initial tangent: null vector of [Jx Jp] with unit parameter component
    J = np.zeros((n + 1, n + 1))
    J[:n, :n] = jacobian_x(system, x, 0.0, p)
    J[:n, n] = jacobian_p(system, x, 0.0, p, [k])[:, 0]
    J[n, n] = 1.0
    tangent = lu_solve(J, np.concatenate([np.zeros(n), [1.0]]))
    tangent *= np.sign(direction) / np.linalg.norm(tangent)

    ds = config.ds
    s = 0.0
    lo, hi = config.bounds.get(free_param, (-np.inf, np.inf))
    for _ in range(config.max_steps):
        for _halving in range(config.max_halvings + 1):
            try:
                u_new, iters = _arclength_newton(
                    system, u + ds * tangent, u, tangent, ds, k,
                    config.newton_tol, config.newton_maxiter,
                )
                break
            except ConvergenceError:
                ds *= 0.5
        else:
            branch.stalled = True
            branch.message = f"step size underflow at {free_param}={u[n]:.6g}"
            log.warning(branch.message)
            return branch
        s += ds
        p_new = p.copy()
        p_new[k] = u_new[n]
        pt = _make_point(system, u_new[:n], p_new, k, s, ds, iters)
        prev = branch.points[-1]
        if (
            locate
            and prev.values["pair"]
            and pt.values["pair"]
            and np.sign(prev.values["hopf"]) != np.sign(pt.values["hopf"])
        ):
            try:
                hopf = locate_hopf(system, prev, pt, free_param)
            except LocalizationError as exc:
                # the nearest pair can switch between two points: not a crossing
                log.info("Hopf bracket at %s in [%g, %g] rejected: %s", free_param,
                         prev.values[free_param], pt.values[free_param], exc)
            else:
                hp = _make_point(system, hopf.equilibrium.x, hopf.equilibrium.params, k, label="HB")
                hp.solution = hopf
                hp.values["omega"] = hopf.omega
                branch.points.append(hp)
        branch.points.append(pt)
        secant = u_new - u
        tangent = secant / np.linalg.norm(secant)
        u = u_new
        p = p_new
        if not lo <= u[n] <= hi:
            branch.message = f"left bounds of {free_param}"
            break
        if iters <= config.fast_iterations:
            ds = min(ds * config.grow, config.ds_max)
    return branch


def locate_hopf(system: DynSystem, a: BranchPoint, b: BranchPoint, free_param: str,
                tol: float = TOL_HOPF, maxiter: int = 60) -> HopfPoint:
    """Refine a Hopf point bracketed by two equilibria of a branch.

    Uses the Illinois variant of regula falsi on the continuation parameter,
    re-converging the equilibrium at each trial value.
    """
    k = system.param_index(free_param)
    pa, pb = a.solution.params.copy(), b.solution.params.copy()
    xa, xb = a.solution.x, b.solution.x
    fa, fb = a.values["hopf"], b.values["hopf"]
    if not (a.values["pair"] and b.values["pair"]):
        raise LocalizationError("Hopf bracket without a complex pair at both ends")
    if np.sign(fa) == np.sign(fb):
        raise LocalizationError("Hopf test does not change sign across the bracket")
    la, lb = pa[k], pb[k]
    side = 0
    for _ in range(maxiter):
        lam = (la * fb - lb * fa) / (fb - fa)
        w = (lam - la) / (lb - la) if lb != la else 0.5
        p = pa.copy()
        p[k] = lam
        x, _ = _newton_fixed_p(system, (1 - w) * xa + w * xb, p)
        spec = eigenvalues(jacobian_x(system, x, 0.0, p))
        if not spec.complex_pairs().size:
            raise LocalizationError(f"complex pair lost at {free_param}={lam:.12g}")
        f = hopf_test(spec)
        if abs(f) < tol:
            return _hopf_point(system, x, p, k, free_param, tol)
        if np.sign(f) == np.sign(fa):
            la, fa, xa = lam, f, x
            if side == -1:
                fb *= 0.5
            side = -1
        else:
            lb, fb, xb = lam, f, x
            if side == 1:
                fa *= 0.5
            side = 1
    raise LocalizationError(f"Hopf refinement did not reach |Re| < {tol}")


def _hopf_point(system, x, p, k, name, tol):
    J = jacobian_x(system, x, 0.0, p)
    vals, vecs = np.linalg.eig(J)
    up = np.flatnonzero(vals.imag > 0)
    dist = np.abs(vals[up].real)
    order = np.argsort(dist)
    if up.size > 1 and dist[order[1]] - dist[order[0]] <= tol:
        raise LocalizationError("two complex pairs equally close to the imaginary axis")
    i = up[order[0]]
    others = np.delete(vals, [i, np.argmin(np.abs(vals - np.conj(vals[i])))])
    if np.any(np.abs(others.real) < 10 * tol):
        raise LocalizationError("Hopf point is not regular: extra eigenvalue on the axis")
    q = vecs[:, i]
    q = q / np.linalg.norm(q)
    # rotate so that the largest component is real and positive
    j = np.argmax(np.abs(q))
    q = q * np.exp(-1j * np.angle(q[j]))
    spec = eigenvalues(J)
    hp = HopfPoint(EquilibriumPoint(np.array(x), np.array(p), spec), float(vals[i].imag), q, name)
    hp._index = k
    return hp
