"""Orthogonal collocation for 1-periodic boundary value problems.

A periodic orbit of ``dx/dt = g(x; p)`` with period ``T`` is represented on
the unit interval as the solution of ``dx/ds = T g(x; p)``, ``x(0) = x(1)``.
Each mesh interval carries a polynomial of degree ``m`` through ``m + 1``
equally spaced representation points and the ODE is imposed at the ``m``
Gauss-Legendre nodes of the interval.

The unknowns of a problem are the representation values plus a list of free
scalar quantities.  Quantities are addressed by name: the system parameters,
``"T"``, Fourier slots such as ``"a[1,2]"`` and the test-function value
``"K"``.  Integral constraints (phase, Fourier projections, test function)
and one closing row (pseudo-arclength or a pinned quantity) complete the
Newton system.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .branch import BranchPoint, ContinuationBranch, StepConfig
from .dynsys import DynSystem, jacobian_p, jacobian_x
from .errors import ConfigurationError, ContractError, ConvergenceError, SingularMatrixError
from .linalg import BorderedSystem, LUFactor, factor_bordered, solve_bordered

log = logging.getLogger(__name__)

TOL_BVP = 1e-10
N_MESH = 40
M_COL = 4


def _lagrange(nodes, t, deriv=False):
    """Lagrange basis (or its derivative) on ``nodes`` evaluated at ``t``.

    Returns an array of shape ``(len(t), len(nodes))``.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    k = len(nodes)
    out = np.zeros((t.size, k))
    for l in range(k):
        others = [r for r in range(k) if r != l]
        denom = np.prod([nodes[l] - nodes[r] for r in others])
        if not deriv:
            out[:, l] = np.prod([t - nodes[r] for r in others], axis=0) / denom
        else:
            acc = np.zeros(t.size)
            for skip in others:
                acc += np.prod([t - nodes[r] for r in others if r != skip], axis=0)
            out[:, l] = acc / denom
    return out


@dataclass(frozen=True, eq=False)
class Mesh:
    """Breakpoints ``0 = tau_0 < ... < tau_N = 1`` and collocation degree."""

    breakpoints: np.ndarray
    degree: int = M_COL

    def __post_init__(self):
        b = np.asarray(self.breakpoints, dtype=float)
        if b.ndim != 1 or b.size < 2 or b[0] != 0.0 or b[-1] != 1.0 or np.any(np.diff(b) <= 0):
            raise ContractError("breakpoints must increase strictly from 0 to 1")
        if self.degree < 1:
            raise ContractError("collocation degree must be at least 1")
        b = b.copy()
        b.setflags(write=False)
        object.__setattr__(self, "breakpoints", b)

    @classmethod
    def uniform(cls, intervals: int = N_MESH, degree: int = M_COL) -> "Mesh":
        return cls(np.linspace(0.0, 1.0, intervals + 1), degree)

    def same_as(self, other: "Mesh") -> bool:
        return self is other or (
            self.degree == other.degree
            and self.breakpoints.shape == other.breakpoints.shape
            and np.array_equal(self.breakpoints, other.breakpoints)
        )

    @property
    def intervals(self) -> int:
        return self.breakpoints.size - 1

    @property
    def h(self) -> np.ndarray:
        return np.diff(self.breakpoints)

    @property
    def npoints(self) -> int:
        return self.intervals * self.degree + 1

    @cached_property
    def ref_nodes(self):
        return np.linspace(0.0, 1.0, self.degree + 1)

    @cached_property
    def _gauss_ref(self):
        x, w = np.polynomial.legendre.leggauss(self.degree)
        return (x + 1) / 2, w / 2

    @cached_property
    def points(self) -> np.ndarray:
        """Representation points, shape ``(N m + 1,)``."""
        b, h = self.breakpoints, self.h
        inner = b[:-1, None] + h[:, None] * self.ref_nodes[None, :-1]
        return np.concatenate([inner.ravel(), [1.0]])

    @cached_property
    def gauss_points(self) -> np.ndarray:
        g, _ = self._gauss_ref
        return (self.breakpoints[:-1, None] + self.h[:, None] * g[None, :]).ravel()

    @cached_property
    def quad_weights(self) -> np.ndarray:
        """Gauss weights scaled to the interval lengths; they sum to 1."""
        _, w = self._gauss_ref
        return (self.h[:, None] * w[None, :]).ravel()

    @cached_property
    def local_interp(self):
        return _lagrange(self.ref_nodes, self._gauss_ref[0])

    @cached_property
    def local_deriv(self):
        return _lagrange(self.ref_nodes, self._gauss_ref[0], deriv=True)

    def _global(self, local, scale):
        m, N = self.degree, self.intervals
        A = np.zeros((N * m, self.npoints))
        for i in range(N):
            A[i * m:(i + 1) * m, i * m:i * m + m + 1] = local * scale[i]
        return A

    @cached_property
    def interp_matrix(self) -> np.ndarray:
        """Maps representation values to values at the Gauss nodes."""
        return self._global(self.local_interp, np.ones(self.intervals))

    @cached_property
    def deriv_matrix(self) -> np.ndarray:
        """Maps representation values to ``d/ds`` at the Gauss nodes."""
        return self._global(self.local_deriv, 1.0 / self.h)

    def projection_weights(self, k: int, kind: str = "sin") -> np.ndarray:
        """Weights ``w`` on the representation points with
        ``w . X[:, j] = int_0^1 2 x_j(s) trig(2 pi k s) ds`` (``k = 0``: the mean).

        Each interval uses a Gauss rule with enough nodes that the product of
        the local polynomial and the trigonometric factor is integrated to
        rounding accuracy.
        """
        cache = self.__dict__.setdefault("_projections", {})
        key = (int(k), kind if k else "mean")
        if key in cache:
            return cache[key]
        m, N = self.degree, self.intervals
        theta = 2 * np.pi * k * float(np.max(self.h))
        q = m // 2 + 8 + int(np.ceil(theta))
        x, w = np.polynomial.legendre.leggauss(q)
        x, w = (x + 1) / 2, w / 2
        basis = _lagrange(self.ref_nodes, x)  # (q, m + 1)
        s = self.breakpoints[:-1, None] + self.h[:, None] * x[None, :]
        if k == 0:
            f = np.ones_like(s)
        else:
            f = 2 * (np.sin if kind == "sin" else np.cos)(2 * np.pi * k * s)
        local = (self.h[:, None] * w[None, :] * f) @ basis  # (N, m + 1)
        out = np.zeros(self.npoints)
        idx = np.arange(N)[:, None] * m + np.arange(m + 1)[None, :]
        np.add.at(out, idx, local)
        out.setflags(write=False)
        cache[key] = out
        return out

    @cached_property
    def point_weights(self) -> np.ndarray:
        """Composite trapezoid weights on the representation points (sum 1)."""
        s = self.points
        w = np.zeros(s.size)
        d = np.diff(s)
        w[:-1] += d / 2
        w[1:] += d / 2
        return w


@dataclass
class PeriodicOrbit:
    """Collocation representation of a 1-periodic orbit plus its parameters.

    ``extras`` holds the additional continuation scalars (Fourier slots and
    ``K``) so that a point of a harmonic branch is self-contained.
    """

    mesh: Mesh
    states: np.ndarray
    period: float
    params: np.ndarray
    param_names: tuple
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float)
        self.params = np.asarray(self.params, dtype=float)
        if self.states.shape[0] != self.mesh.npoints:
            raise ContractError(
                f"orbit has {self.states.shape[0]} points, mesh needs {self.mesh.npoints}"
            )

    @property
    def n(self) -> int:
        return self.states.shape[1]

    def values(self) -> dict:
        out = dict(zip(self.param_names, map(float, self.params)))
        out["T"] = float(self.period)
        out.update(self.extras)
        return out

    def value(self, name: str) -> float:
        if name == "T":
            return float(self.period)
        if name in self.extras:
            return float(self.extras[name])
        try:
            return float(self.params[self.param_names.index(name)])
        except ValueError:
            raise ConfigurationError(f"orbit has no quantity named {name!r}") from None

    def with_value(self, name: str, v: float) -> "PeriodicOrbit":
        if name == "T":
            return replace(self, period=float(v))
        if name in self.param_names:
            p = self.params.copy()
            p[self.param_names.index(name)] = v
            return replace(self, params=p)
        return replace(self, extras={**self.extras, name: float(v)})

    @cached_property
    def gauss_states(self) -> np.ndarray:
        return self.mesh.interp_matrix @ self.states

    def copy(self) -> "PeriodicOrbit":
        return PeriodicOrbit(
            self.mesh, self.states.copy(), self.period, self.params.copy(),
            self.param_names, dict(self.extras),
        )


def orbit_from_function(func, period, system: DynSystem, mesh: Mesh | None = None, extras=None):
    """Sample ``func(s) -> (n, len(s))`` on the representation points."""
    mesh = Mesh.uniform() if mesh is None else mesh
    states = np.asarray(func(mesh.points), dtype=float).T
    return PeriodicOrbit(mesh, states, period, system.params.copy(), system.param_names, dict(extras or {}))


def _locate(mesh: Mesh, s):
    s = np.atleast_1d(np.asarray(s, dtype=float))
    if np.any(s < 0.0) or np.any(s > 1.0) or np.any(~np.isfinite(s)):
        raise ContractError("scaled time must lie in [0, 1]")
    i = np.clip(np.searchsorted(mesh.breakpoints, s, side="right") - 1, 0, mesh.intervals - 1)
    tau = (s - mesh.breakpoints[i]) / mesh.h[i]
    return i, tau


def eval_orbit(orbit: PeriodicOrbit, s, derivative: bool = False) -> np.ndarray:
    """Value of the piecewise polynomial at scaled time(s) ``s`` in [0, 1].

    Scalar ``s`` returns shape ``(n,)``, array ``s`` returns ``(len(s), n)``.
    With ``derivative=True`` the result is ``dx/ds``.
    """
    scalar = np.ndim(s) == 0
    mesh = orbit.mesh
    i, tau = _locate(mesh, s)
    m = mesh.degree
    basis = _lagrange(mesh.ref_nodes, tau, deriv=derivative)
    idx = i[:, None] * m + np.arange(m + 1)[None, :]
    out = np.einsum("pl,pln->pn", basis, orbit.states[idx])
    if derivative:
        out /= mesh.h[i][:, None]
    return out[0] if scalar else out


def reinterpolate(orbit: PeriodicOrbit, mesh: Mesh) -> PeriodicOrbit:
    states = eval_orbit(orbit, mesh.points)
    return PeriodicOrbit(mesh, states, orbit.period, orbit.params.copy(), orbit.param_names, dict(orbit.extras))


# --------------------------------------------------------------------------
# integral constraints


@dataclass
class _Context:
    mesh: Mesh
    xg: np.ndarray
    values: dict
    X: np.ndarray | None = None

    @property
    def wq(self):
        return self.mesh.quad_weights

    @property
    def sg(self):
        return self.mesh.gauss_points


class IntegralConstraint:
    """One integral row of the BVP.

    Subclasses provide ``residual``, ``d_nodes`` (derivative with respect to
    the state at the Gauss nodes, shape ``(M, n)`` or ``None``) or
    ``d_points`` (the same with respect to the representation values) and
    ``d_values`` (derivatives with respect to named scalars).
    """

    kind = "generic"
    slot: str | None = None

    def slots(self):
        return () if self.slot is None else (self.slot,)

    def residual(self, ctx: _Context) -> float:
        raise NotImplementedError

    def d_nodes(self, ctx: _Context):
        return None

    def d_points(self, ctx: _Context):
        return None

    def d_values(self, ctx: _Context) -> dict:
        return {}


class PhaseCondition(IntegralConstraint):
    """``int_0^1 <x(s), x_ref'(s)> ds = 0`` against a reference orbit."""

    kind = "phase"

    def __init__(self, reference: PeriodicOrbit):
        self.reference = reference
        self._cache = (None, None)

    def ref_derivative(self, mesh: Mesh) -> np.ndarray:
        cached_mesh, cached = self._cache
        if cached_mesh is not None and cached_mesh.same_as(mesh):
            return cached
        ref = self.reference
        if ref.mesh.same_as(mesh):
            d = mesh.deriv_matrix @ ref.states
        else:
            d = eval_orbit(ref, mesh.gauss_points, derivative=True)
        self._cache = (mesh, d)
        return d

    def residual(self, ctx):
        return float(np.sum(ctx.wq[:, None] * ctx.xg * self.ref_derivative(ctx.mesh)))

    def d_nodes(self, ctx):
        return ctx.wq[:, None] * self.ref_derivative(ctx.mesh)


def fourier_slot(kind: str, k: int, j: int) -> str:
    return f"{'a' if kind == 'sin' else 'b'}[{k},{j}]"


class FourierConstraint(IntegralConstraint):
    """``int_0^1 2 x_j(s) sin(2 pi k s) ds - a_kj = 0`` (or cosine / ``b_kj``).

    ``j`` is 1-based.
    """

    def __init__(self, kind: str, k: int, j: int):
        if kind not in ("sin", "cos"):
            raise ContractError(f"Fourier constraint kind must be 'sin' or 'cos', got {kind!r}")
        self.kind = f"fourier_{kind}"
        self.trig = kind
        self.k, self.j = int(k), int(j)
        self.slot = fourier_slot(kind, k, j)

    def _weights(self, ctx):
        return ctx.mesh.projection_weights(self.k, self.trig)

    def residual(self, ctx):
        return float(self._weights(ctx) @ ctx.X[:, self.j - 1]) - ctx.values[self.slot]

    def d_points(self, ctx):
        d = np.zeros_like(ctx.X)
        d[:, self.j - 1] = self._weights(ctx)
        return d

    def d_values(self, ctx):
        return {self.slot: -1.0}


class KRefConstraint(IntegralConstraint):
    """``K - f(S_a, S_b, T) = 0`` for a test-function kind with
    ``value(values)``, ``gradient(values)`` and ``requires()`` methods."""

    kind = "kref"
    slot = "K"

    def __init__(self, test):
        self.test = test

    def residual(self, ctx):
        return ctx.values["K"] - self.test.value(ctx.values)

    def d_values(self, ctx):
        out = {"K": 1.0}
        for name, g in self.test.gradient(ctx.values).items():
            out[name] = out.get(name, 0.0) - g
        return out


# --------------------------------------------------------------------------
# problem definition and Newton system


@dataclass
class Closing:
    """The last Newton row ``c . U = d`` (pseudo-arclength or a pin)."""

    row: np.ndarray
    target: float


class PeriodicBVP:
    """Collocation equations, periodicity, integral constraints, free scalars."""

    def __init__(self, system: DynSystem, constraints, free):
        if not system.autonomous:
            raise ConfigurationError("periodic BVPs need an autonomous system (autonomize first)")
        self.system = system
        self.constraints = list(constraints)
        self.free = tuple(free)
        check_counts(len(self.constraints), len(self.free))
        if len(set(self.free)) != len(self.free):
            raise ConfigurationError(f"duplicate free parameters in {self.free}")
        known = set(system.param_names) | {"T"}
        for c in self.constraints:
            known.update(c.slots())
            for name in getattr(getattr(c, "test", None), "requires", lambda: ())():
                if name not in known and name != "T":
                    raise ConfigurationError(f"test function needs {name!r}, which no constraint defines")
        for name in self.free:
            if name not in known:
                raise ConfigurationError(f"free parameter {name!r} is not a system parameter, T or a constraint slot")
        self._sys_free = [(i, system.param_index(nm)) for i, nm in enumerate(self.free) if nm in system.param_names]

    @property
    def n(self) -> int:
        return self.system.n

    @property
    def phase(self) -> PhaseCondition | None:
        for c in self.constraints:
            if isinstance(c, PhaseCondition):
                return c
        return None

    def set_reference(self, orbit: PeriodicOrbit):
        for i, c in enumerate(self.constraints):
            if isinstance(c, PhaseCondition):
                self.constraints[i] = PhaseCondition(orbit)

    def pack(self, orbit: PeriodicOrbit) -> np.ndarray:
        return np.concatenate([orbit.states.ravel(), [orbit.value(nm) for nm in self.free]])

    def unpack(self, U, template: PeriodicOrbit) -> PeriodicOrbit:
        P, n = template.mesh.npoints, self.n
        orbit = PeriodicOrbit(
            template.mesh, U[: P * n].reshape(P, n).copy(), template.period,
            template.params.copy(), template.param_names, dict(template.extras),
        )
        for nm, v in zip(self.free, U[P * n:]):
            if nm == "T":
                orbit.period = float(v)
            elif nm in orbit.param_names:
                orbit.params[orbit.param_names.index(nm)] = v
            else:
                orbit.extras[nm] = float(v)
        return orbit

    def weights(self, mesh: Mesh) -> np.ndarray:
        """Diagonal weights of the inner product used for arclength and tangents."""
        w = np.repeat(mesh.point_weights, self.n)
        return np.concatenate([w, np.ones(len(self.free))])

    def scales(self, orbit: PeriodicOrbit) -> np.ndarray:
        """Per-component magnitudes used to make Newton tolerances relative."""
        sx = 1.0 + np.max(np.abs(orbit.states), axis=0)
        sp = [1.0 + abs(orbit.value(nm)) for nm in self.free]
        return np.concatenate([np.tile(sx, orbit.mesh.npoints), sp])

    def missing_values(self, orbit: PeriodicOrbit):
        vals = orbit.values()
        return [s for c in self.constraints for s in c.slots() if s not in vals]

    def residual_only(self, orbit: PeriodicOrbit) -> np.ndarray:
        mesh, X, T = orbit.mesh, orbit.states, orbit.period
        xg = mesh.interp_matrix @ X
        g = self.system.rhs(xg.T, 0.0, orbit.params).T
        coll = (mesh.deriv_matrix @ X - T * g).ravel()
        per = X[0] - X[-1]
        ctx = _Context(mesh, xg, orbit.values(), X)
        con = [c.residual(ctx) for c in self.constraints]
        return np.concatenate([coll, per, con])

    def discretize(self, orbit: PeriodicOrbit, closing: Closing | None) -> BorderedSystem:
        """Newton system at ``orbit``; ``rhs`` holds the negated residual."""
        system, mesh = self.system, orbit.mesh
        n, m, N, P = self.n, mesh.degree, mesh.intervals, mesh.npoints
        X, T, p = orbit.states, orbit.period, orbit.params
        missing = self.missing_values(orbit)
        if missing:
            raise ConfigurationError(f"orbit lacks values for {missing}")
        xg = mesh.interp_matrix @ X
        xt = xg.T
        g = np.asarray(system.rhs(xt, 0.0, p)).T
        Jg = np.moveaxis(jacobian_x(system, xt, 0.0, p), -1, 0)  # (M, n, n)

        nrow_core = (N * m + 1) * n
        core = np.zeros((nrow_core, P * n))
        eye = np.eye(n)
        Ld, Dd = mesh.local_interp, mesh.local_deriv
        Jb = Jg.reshape(N, m, n, n)
        blocks = (
            Dd[None, :, None, :, None] / mesh.h[:, None, None, None, None] * eye[None, None, :, None, :]
            - T * Ld[None, :, None, :, None] * Jb[:, :, :, None, :]
        )
        for i in range(N):
            core[i * m * n:(i + 1) * m * n, i * m * n:(i * m + m + 1) * n] = blocks[i].reshape(m * n, (m + 1) * n)
        r0 = N * m * n
        core[r0:r0 + n, :n] = eye
        core[r0:r0 + n, (P - 1) * n:] = -eye

        nf = len(self.free)
        bcols = np.zeros((nrow_core, nf))
        if self._sys_free:
            jp = jacobian_p(system, xt, 0.0, p, [k for _, k in self._sys_free])  # (n, r, M)
            for col, (i, _) in enumerate(self._sys_free):
                bcols[:r0, i] = -T * jp[:, col, :].T.ravel()
        if "T" in self.free:
            bcols[:r0, self.free.index("T")] = -g.ravel()

        ctx = _Context(mesh, xg, orbit.values(), X)
        nc = len(self.constraints)
        nrow_b = nc + (closing is not None)
        brows = np.zeros((nrow_b, P * n))
        corner = np.zeros((nrow_b, nf))
        res_b = np.zeros(nrow_b)
        interp_T = mesh.interp_matrix.T
        for r, c in enumerate(self.constraints):
            res_b[r] = c.residual(ctx)
            d = c.d_points(ctx)
            if d is None:
                d = c.d_nodes(ctx)
                if d is not None:
                    d = interp_T @ d
            if d is not None:
                brows[r] = d.ravel()
            for name, v in c.d_values(ctx).items():
                if name in self.free:
                    corner[r, self.free.index(name)] += v
        U = None
        if closing is not None:
            U = self.pack(orbit)
            brows[nc] = closing.row[: P * n]
            corner[nc] = closing.row[P * n:]
            res_b[nc] = closing.row @ U - closing.target

        res_core = np.concatenate([(mesh.deriv_matrix @ X - T * g).ravel(), X[0] - X[-1]])
        return BorderedSystem(core, bcols, brows, corner, -np.concatenate([res_core, res_b]))


def check_counts(n_constraints: int, n_free: int, detail: str = ""):
    """Free scalars must number one more than the integral constraints."""
    required = n_constraints + 1
    if n_free != required:
        raise ConfigurationError(
            f"free-parameter count mismatch{detail}: {n_constraints} integral constraints "
            f"plus the pseudo-arclength/closing row require {required} free parameters, "
            f"got {n_free}"
        )


def discretize(orbit, system, constraints, free_params, closing=None) -> BorderedSystem:
    """Newton system of the BVP around ``orbit`` (see :class:`PeriodicBVP`)."""
    return PeriodicBVP(system, constraints, free_params).discretize(orbit, closing)


def pin(problem: PeriodicBVP, orbit: PeriodicOrbit, name: str, value: float | None = None) -> Closing:
    """Closing row that fixes free quantity ``name`` (at ``value`` or its current value)."""
    if name not in problem.free:
        raise ConfigurationError(f"can only pin a free quantity; {name!r} is not free")
    row = np.zeros(orbit.mesh.npoints * problem.n + len(problem.free))
    row[orbit.mesh.npoints * problem.n + problem.free.index(name)] = 1.0
    return Closing(row, orbit.value(name) if value is None else float(value))


def arclength(problem: PeriodicBVP, base: PeriodicOrbit, tangent: np.ndarray, ds: float) -> Closing:
    row = problem.weights(base.mesh) * tangent
    return Closing(row, float(row @ problem.pack(base)) + ds)


@dataclass
class NewtonResult:
    orbit: PeriodicOrbit
    iterations: int
    residual: float
    factor: LUFactor | None = None


def newton_correct(problem: PeriodicBVP, orbit: PeriodicOrbit, closing: Closing,
                   tol: float = TOL_BVP, maxiter: int = 10) -> NewtonResult:
    """Newton iteration on the bordered collocation system.

    Convergence: scaled update below ``tol`` and residual below ``tol``
    relative to the collocation scale.  Fails when the residual grows on two
    consecutive iterations or after ``maxiter`` iterations.
    """
    scales = problem.scales(orbit)
    U = problem.pack(orbit)
    current = orbit
    last = np.inf
    growth = 0
    res = np.inf
    for it in range(maxiter + 1):
        try:
            bs = problem.discretize(current, closing)
        except FloatingPointError as exc:
            raise ConvergenceError(f"non-finite values during Newton: {exc}", residual=res, iterations=it) from exc
        res = float(np.max(np.abs(bs.rhs)))
        if not np.isfinite(res):
            raise ConvergenceError("non-finite residual", residual=res, iterations=it)
        growth = growth + 1 if res > last else 0
        if growth >= 2:
            raise ConvergenceError(f"Newton diverging (residual {res:.3e})", residual=res, iterations=it)
        if it == maxiter:
            break
        try:
            factor = factor_bordered(bs)
            dU = factor.solve(bs.rhs)
        except SingularMatrixError as exc:
            raise ConvergenceError(f"singular Newton matrix: {exc}", residual=res, iterations=it) from exc
        U = U + dU
        current = problem.unpack(U, current)
        last = res
        if np.max(np.abs(dU) / scales) < tol:
            final = float(np.max(np.abs(problem.residual_only(current))))
            return NewtonResult(current, it + 1, final, factor)
        if res < 1e-3 * tol and np.max(np.abs(dU) / scales) < 1e3 * tol:
            return NewtonResult(current, it + 1, res, factor)
    raise ConvergenceError(
        f"Newton did not converge in {maxiter} iterations (residual {res:.3e})", residual=res, iterations=maxiter
    )


def tangent_at(problem: PeriodicBVP, orbit: PeriodicOrbit, guide_row: np.ndarray,
               factor: LUFactor | None = None) -> np.ndarray:
    """Null vector of the BVP Jacobian, normalized in the weighted norm and
    oriented so that ``guide_row . t > 0``.

    ``factor`` may pass the factorization of a Newton matrix whose closing
    row is ``guide_row`` (the last arclength corrector) to skip a new one.
    """
    size = orbit.mesh.npoints * problem.n + len(problem.free)
    e = np.zeros(size)
    e[-1] = 1.0
    if factor is None:
        bs = problem.discretize(orbit, Closing(guide_row, 0.0))
        bs.rhs = e
        t = solve_bordered(bs)
    else:
        t = factor.solve(e)
    w = problem.weights(orbit.mesh)
    return t / np.sqrt(np.sum(w * t * t))


# --------------------------------------------------------------------------
# mesh adaptation


def _error_density(orbit: PeriodicOrbit) -> np.ndarray:
    mesh = orbit.mesh
    m, N = mesh.degree, mesh.intervals
    X = orbit.states
    idx = np.arange(N)[:, None] * m + np.arange(m + 1)[None, :]
    local = X[idx]  # (N, m+1, n)
    # m-th derivative of each local polynomial (constant per interval)
    coeff = np.array([(-1) ** (m - r) * _binom(m, r) for r in range(m + 1)])
    dm = np.einsum("r,irn->in", coeff, local) / (mesh.h[:, None] / m) ** m
    # (m+1)-th derivative estimated at breakpoints, periodic wrap
    h = mesh.h
    dnext = np.roll(dm, -1, axis=0) - dm
    hmid = (h + np.roll(h, -1)) / 2
    at_bp = np.linalg.norm(dnext, axis=1) / hmid  # at right breakpoint of each interval
    per_int = (at_bp + np.roll(at_bp, 1)) / 2
    dens = per_int ** (1.0 / (m + 1))
    dens = (np.roll(dens, 1) + 2 * dens + np.roll(dens, -1)) / 4
    floor = 0.05 * np.mean(dens) if np.mean(dens) > 0 else 1.0
    return np.maximum(dens, floor)


def _binom(a, b):
    from math import comb

    return comb(a, b)


def adapt_mesh(orbit: PeriodicOrbit, intervals: int | None = None) -> PeriodicOrbit:
    """Redistribute breakpoints to equidistribute the interpolation-error
    estimate and re-interpolate the orbit onto the new mesh."""
    mesh = orbit.mesh
    N = mesh.intervals if intervals is None else intervals
    dens = _error_density(orbit)
    cum = np.concatenate([[0.0], np.cumsum(dens * mesh.h)])
    targets = np.linspace(0.0, cum[-1], N + 1)
    new_bp = np.interp(targets, cum, mesh.breakpoints)
    new_bp[0], new_bp[-1] = 0.0, 1.0
    return reinterpolate(orbit, Mesh(new_bp, mesh.degree))


# --------------------------------------------------------------------------
# continuation


def _scaled_distance(problem, a: PeriodicOrbit, b: PeriodicOrbit) -> float:
    ua, ub = problem.pack(a), problem.pack(b)
    return float(np.sqrt(np.sum(problem.weights(a.mesh) * (ua - ub) ** 2)))


class OrbitContinuation:
    """Pseudo-arclength continuation of a :class:`PeriodicBVP`.

    ``monitors`` is an optional callable ``orbit -> dict`` whose results are
    stored with every point.  The first free quantity is the one whose
    tangent component defines fold (``LP``) points.
    """

    def __init__(self, problem: PeriodicBVP, config: StepConfig | None = None, monitors=None, primary=None):
        self.problem = problem
        self.config = StepConfig() if config is None else config
        self.monitors = monitors
        self.primary = problem.free[0] if primary is None else primary

    # -- helpers ---------------------------------------------------------
    def _values(self, orbit):
        vals = orbit.values()
        if self.monitors is not None:
            vals.update(self.monitors(orbit))
        return vals

    def _point(self, orbit, tangent, label=None, s=0.0, ds=0.0, iters=0):
        return BranchPoint(orbit, self._values(orbit), label=label, arclength=s, step=ds,
                           iterations=iters, tangent=tangent)

    def _index(self, name):
        P = self._mesh.npoints
        return P * self.problem.n + self.problem.free.index(name)

    def _correct(self, orbit, closing, reference):
        self.problem.set_reference(reference)
        c = self.config
        return newton_correct(self.problem, orbit, closing, c.newton_tol, c.newton_maxiter)

    def _unit_row(self, name):
        row = np.zeros(self._mesh.npoints * self.problem.n + len(self.problem.free))
        row[self._index(name)] = 1.0
        return row

    # -- public ----------------------------------------------------------
    def initial_tangent(self, orbit, direction=1.0, along=None):
        self._mesh = orbit.mesh
        along = self.primary if along is None else along
        self.problem.set_reference(orbit)
        t = tangent_at(self.problem, orbit, self._unit_row(along))
        return t * np.sign(direction)

    def run(self, start: PeriodicOrbit, direction: float = 1.0, tangent=None, along=None,
            stop=None) -> ContinuationBranch:
        """Continue from ``start`` (already converged) for up to ``max_steps``.

        ``stop`` is an optional predicate on labeled :class:`BranchPoint`
        objects; the branch ends at the first one for which it is true.
        """
        cfg, prob = self.config, self.problem
        self._mesh = start.mesh
        branch = ContinuationBranch(free=prob.free)
        if tangent is None:
            tangent = self.initial_tangent(start, direction, along)
        current = start
        branch.points.append(self._point(current, tangent))
        ds = cfg.ds
        s = 0.0
        since_adapt = 0
        for _ in range(cfg.max_steps):
            U = prob.pack(current)
            result = None
            for _h in range(cfg.max_halvings + 1):
                pred = prob.unpack(U + ds * tangent, current)
                try:
                    result = self._correct(pred, arclength(prob, current, tangent, ds), current)
                    w = prob.weights(self._mesh)
                    new_t = tangent_at(prob, result.orbit, w * tangent, result.factor)
                    turn = np.arccos(np.clip(np.dot(w * tangent, new_t), -1.0, 1.0))
                    if turn > cfg.max_turn and ds > cfg.ds_min:
                        raise ConvergenceError(f"tangent turned by {turn:.3g} rad")
                    break
                except (ConvergenceError, SingularMatrixError) as exc:
                    log.debug("step %.3g rejected: %s", ds, exc)
                    result = None
                    ds *= 0.5
                    if ds < cfg.ds_min:
                        break
            if result is None:
                branch.stalled = True
                branch.message = f"step size underflow after {len(branch)} points"
                log.warning(branch.message)
                return branch
            new = result.orbit
            s += ds
            events = self._events(current, tangent, new, new_t, ds)
            for ev_orbit, ev_t, label in events:
                branch.points.append(self._point(ev_orbit, ev_t, label=label, s=s))
                if label == "EP" or (stop is not None and stop(branch.points[-1])):
                    halt = label
                    break
            else:
                halt = None
            if halt is not None:
                branch.message = "left the parameter bounds" if halt == "EP" else f"stopped at {halt}"
                return branch
            branch.points.append(self._point(new, new_t, s=s, ds=ds, iters=result.iterations))
            current, tangent = new, new_t
            since_adapt += 1
            if cfg.adapt_every and since_adapt >= cfg.adapt_every:
                since_adapt = 0
                current, tangent = self._remesh(current, tangent)
                branch.points[-1].solution = current
                branch.points[-1].tangent = tangent
            if result.iterations <= cfg.fast_iterations:
                ds = min(ds * cfg.grow, cfg.ds_max)
        branch.message = "maximum number of steps reached"
        return branch

    def _remesh(self, orbit, tangent):
        prob = self.problem
        adapted = adapt_mesh(orbit)
        P, n = orbit.mesh.npoints, prob.n
        t_orbit = replace(orbit, states=tangent[: P * n].reshape(P, n))
        t_states = eval_orbit(t_orbit, adapted.mesh.points)
        new_t = np.concatenate([t_states.ravel(), tangent[P * n:]])
        self._mesh = adapted.mesh
        try:
            res = self._correct(adapted, arclength(prob, adapted, new_t, 0.0), orbit)
        except ConvergenceError as exc:
            log.warning("mesh adaptation rejected: %s", exc)
            self._mesh = orbit.mesh
            return orbit, tangent
        w = prob.weights(self._mesh)
        new_t = tangent_at(prob, res.orbit, w * new_t)
        return res.orbit, new_t

    def _events(self, prev, t_prev, new, t_new, ds):
        """Labeled points strictly between ``prev`` and ``new``, in order."""
        cfg, prob = self.config, self.problem
        found = []
        vp, vn = self._values(prev), self._values(new)
        for name, targets in cfg.labels.items():
            if name not in prob.free:
                continue
            for target in np.atleast_1d(targets):
                a, b = vp[name] - target, vn[name] - target
                if a == 0.0 or a * b > 0:
                    continue
                theta = a / (a - b)
                found.append((theta, name, float(target), "UZ"))
        for name, (lo, hi) in cfg.bounds.items():
            if name not in vn:
                continue
            for bound in (lo, hi):
                if not np.isfinite(bound):
                    continue
                a, b = vp[name] - bound, vn[name] - bound
                if a != 0.0 and a * b <= 0:
                    found.append((a / (a - b), name, float(bound), "EP"))
        if cfg.detect_folds and self.primary in prob.free:
            k = self._index(self.primary)
            if t_prev[k] * t_new[k] < 0:
                found.append((t_prev[k] / (t_prev[k] - t_new[k]), self.primary, None, "LP"))
        found.sort(key=lambda e: e[0])
        out = []
        for theta, name, target, label in found:
            try:
                if label == "LP":
                    orbit, tan = self._refine_fold(prev, t_prev, new, t_new, ds)
                else:
                    orbit, tan = self._refine_value(prev, t_prev, new, name, target, theta)
            except (ConvergenceError, SingularMatrixError) as exc:
                log.warning("could not refine %s point on %s: %s", label, name, exc)
                continue
            if label == "UZ":
                label = f"UZ:{name}={target:.12g}"
            out.append((orbit, tan, label))
            if label == "EP":
                break
        return out

    def _refine_value(self, prev, t_prev, new, name, target, theta):
        prob = self.problem
        U = (1 - theta) * prob.pack(prev) + theta * prob.pack(new)
        guess = prob.unpack(U, prev)
        res = self._correct(guess, pin(prob, guess, name, target), prev)
        tan = tangent_at(prob, res.orbit, prob.weights(self._mesh) * t_prev)
        return res.orbit, tan

    def _refine_fold(self, prev, t_prev, new, t_new, ds, tol=1e-8, maxiter=40):
        """Illinois iteration on the arclength offset for a zero of the
        primary parameter's tangent component, bracketed by the step."""
        prob = self.problem
        k = self._index(self.primary)
        U0 = prob.pack(prev)
        w = prob.weights(self._mesh)
        sa, ha = 0.0, t_prev[k]
        sb, hb = ds, t_new[k]
        side = 0
        h = hb
        for _ in range(maxiter):
            s = (sa * hb - sb * ha) / (hb - ha)
            guess = prob.unpack(U0 + s * t_prev, prev)
            res = self._correct(guess, arclength(prob, prev, t_prev, s), prev)
            tan = tangent_at(prob, res.orbit, w * t_prev, res.factor)
            h = tan[k]
            if abs(h) < tol:
                return res.orbit, tan
            if np.sign(h) == np.sign(ha):
                sa, ha = s, h
                if side == -1:
                    hb *= 0.5
                side = -1
            else:
                sb, hb = s, h
                if side == 1:
                    ha *= 0.5
                side = 1
        raise ConvergenceError(f"fold refinement stalled at |dp/ds| = {abs(h):.2e}")
