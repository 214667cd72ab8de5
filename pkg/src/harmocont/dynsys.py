"""Vector fields with parameters, Jacobians and autonomization of forced systems.

Right-hand sides are written so that they broadcast: ``rhs(x, t, p)`` receives
``x`` with shape ``(n,)`` or ``(n, M)`` and returns an array of the same shape.
Jacobians follow the same convention with shape ``(n, n)`` / ``(n, n, M)``
for ``d(rhs)/dx`` and ``(n, q)`` / ``(n, q, M)`` for ``d(rhs)/dp``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, ContractError

FD_EPS = np.finfo(float).eps ** (1.0 / 3.0)


@dataclass(frozen=True)
class DynSystem:
    """An ODE ``dx/dt = g(x, t; p)``.

    Instances are immutable; use :meth:`with_params` to obtain a copy with
    different parameter values.
    """

    n: int
    rhs: Callable
    params: np.ndarray
    param_names: tuple
    jac_x: Callable | None = None
    jac_p: Callable | None = None
    autonomous: bool = True
    state_names: tuple = ()
    name: str = ""
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        p = np.array(self.params, dtype=float)
        p.setflags(write=False)
        object.__setattr__(self, "params", p)
        object.__setattr__(self, "param_names", tuple(self.param_names))
        if len(self.param_names) != p.size:
            raise ContractError(
                f"{p.size} parameter values but {len(self.param_names)} names"
            )
        if not self.state_names:
            names = tuple(f"x{i + 1}" for i in range(self.n))
            object.__setattr__(self, "state_names", names)

    @property
    def q(self) -> int:
        return self.params.size

    def param_index(self, name: str) -> int:
        try:
            return self.param_names.index(name)
        except ValueError:
            raise ConfigurationError(
                f"unknown parameter {name!r}; system {self.name or '?'} has "
                f"{', '.join(self.param_names)}"
            ) from None

    def with_params(self, **values) -> "DynSystem":
        p = self.params.copy()
        for k, v in values.items():
            p[self.param_index(k)] = v
        return replace(self, params=p)

    def param(self, name: str) -> float:
        return float(self.params[self.param_index(name)])


def _check(system: DynSystem, x, p):
    x = np.asarray(x, dtype=float)
    if x.shape[0] != system.n:
        raise ContractError(f"state has {x.shape[0]} components, system has {system.n}")
    p = system.params if p is None else np.asarray(p, dtype=float)
    if p.shape != (system.q,):
        raise ContractError(f"parameter vector has shape {p.shape}, expected ({system.q},)")
    return x, p


def eval_rhs(system: DynSystem, x, t=0.0, p=None) -> np.ndarray:
    """Evaluate ``g(x, t; p)``; ``p`` defaults to the system's own parameters."""
    x, p = _check(system, x, p)
    out = np.asarray(system.rhs(x, t, p), dtype=float)
    if out.shape != x.shape:
        raise ContractError(f"rhs returned shape {out.shape} for state shape {x.shape}")
    return out


def _fd_steps(x):
    return FD_EPS * np.maximum(1.0, np.abs(x))


def jacobian_x_fd(system: DynSystem, x, t=0.0, p=None) -> np.ndarray:
    """Central finite-difference ``d(rhs)/dx``; works on batches ``(n, M)``."""
    x, p = _check(system, x, p)
    h = _fd_steps(x)
    cols = []
    for j in range(system.n):
        xp = x.copy()
        xm = x.copy()
        xp[j] += h[j]
        xm[j] -= h[j]
        cols.append((system.rhs(xp, t, p) - system.rhs(xm, t, p)) / (2 * h[j]))
    return np.stack(cols, axis=1)


def jacobian_p_fd(system: DynSystem, x, t=0.0, p=None, indices=None) -> np.ndarray:
    """Central finite-difference ``d(rhs)/dp`` for the selected parameters."""
    x, p = _check(system, x, p)
    indices = range(system.q) if indices is None else indices
    cols = []
    for k in indices:
        h = FD_EPS * max(1.0, abs(p[k]))
        pp = p.copy()
        pm = p.copy()
        pp[k] += h
        pm[k] -= h
        cols.append((system.rhs(x, t, pp) - system.rhs(x, t, pm)) / (2 * h))
    if not cols:
        return np.zeros((system.n, 0) + x.shape[1:])
    return np.stack(cols, axis=1)


def jacobian_x(system: DynSystem, x, t=0.0, p=None) -> np.ndarray:
    """State Jacobian: analytic when the system provides one, else FD."""
    if system.jac_x is None:
        return jacobian_x_fd(system, x, t, p)
    x, p = _check(system, x, p)
    return np.asarray(system.jac_x(x, t, p), dtype=float)


def jacobian_p(system: DynSystem, x, t=0.0, p=None, indices=None) -> np.ndarray:
    if system.jac_p is None:
        return jacobian_p_fd(system, x, t, p, indices)
    x, p = _check(system, x, p)
    full = np.asarray(system.jac_p(x, t, p), dtype=float)
    if indices is None:
        return full
    return full[:, list(indices)]


def check_autonomous(system: DynSystem, rng=None, samples=8) -> bool:
    """Return True when rhs does not depend on time at random states."""
    rng = np.random.default_rng(0) if rng is None else rng
    x = rng.normal(size=(system.n, samples))
    a = system.rhs(x, 0.0, system.params)
    b = system.rhs(x, 1.2345, system.params)
    return bool(np.array_equal(a, b))


@dataclass(frozen=True)
class AuxOscillator:
    """Normal-form oscillator whose stable cycle at ``alpha = 1`` is
    ``v = sin(beta t)``, ``w = cos(beta t)``."""

    alpha: float = 1.0
    beta: float = 1.0
    cubic_sign: float = -1.0

    def rhs(self, v, w, alpha=None, beta=None):
        alpha = self.alpha if alpha is None else alpha
        beta = self.beta if beta is None else beta
        r2 = v * v + w * w
        return (
            alpha * v + beta * w + self.cubic_sign * v * r2,
            -beta * v + alpha * w + self.cubic_sign * w * r2,
        )


# The sign of the cubic terms is fixed: only -r^2 makes sin/cos a solution.
AUX_CUBIC_SIGN = -1.0


@dataclass(frozen=True)
class ForcingBinding:
    """Adds ``gain * v`` or ``gain * w`` to equation ``target`` (0-based).

    ``gain`` is either a constant or a callable of the (unforced) parameter
    vector, so that forcing amplitudes built from model parameters stay
    continuable.
    """

    target: int
    gain: float | Callable = 1.0
    channel: str = "w"

    def gain_value(self, p) -> float:
        return self.gain(p) if callable(self.gain) else float(self.gain)


def autonomize(
    system: DynSystem,
    bindings: Sequence[ForcingBinding],
    beta: float,
    alpha: float = 1.0,
) -> DynSystem:
    """Append the auxiliary oscillator ``(v, w)`` and wire the forcing.

    The returned system has ``n + 2`` states and two extra parameters named
    ``alpha`` and ``beta`` (forcing angular frequency).
    """
    if not bindings:
        raise ConfigurationError("autonomize needs at least one forcing binding")
    n, q = system.n, system.q
    for b in bindings:
        if not 0 <= b.target < n:
            raise ContractError(f"binding target {b.target} outside 0..{n - 1}")
        if b.channel not in ("v", "w"):
            raise ContractError(f"binding channel must be 'v' or 'w', got {b.channel!r}")
    bindings = tuple(bindings)
    sgn = AUX_CUBIC_SIGN

    def rhs(xx, t, pp):
        x = xx[:n]
        v, w = xx[n], xx[n + 1]
        p = pp[:q]
        alpha_, beta_ = pp[q], pp[q + 1]
        f = np.array(system.rhs(x, t, p), dtype=float)
        for b in bindings:
            f[b.target] = f[b.target] + b.gain_value(p) * (v if b.channel == "v" else w)
        r2 = v * v + w * w
        dv = alpha_ * v + beta_ * w + sgn * v * r2
        dw = -beta_ * v + alpha_ * w + sgn * w * r2
        return np.concatenate([f, dv[None], dw[None]], axis=0)

    jac_x = None
    if system.jac_x is not None:

        def jac_x(xx, t, pp):
            x = xx[:n]
            v, w = xx[n], xx[n + 1]
            p = pp[:q]
            alpha_, beta_ = pp[q], pp[q + 1]
            inner = np.asarray(system.jac_x(x, t, p), dtype=float)
            J = np.zeros((n + 2, n + 2) + xx.shape[1:])
            J[:n, :n] = inner
            for b in bindings:
                col = n if b.channel == "v" else n + 1
                J[b.target, col] += b.gain_value(p)
            r2 = v * v + w * w
            J[n, n] = alpha_ + sgn * (r2 + 2 * v * v)
            J[n, n + 1] = beta_ + sgn * 2 * v * w
            J[n + 1, n] = -beta_ + sgn * 2 * v * w
            J[n + 1, n + 1] = alpha_ + sgn * (r2 + 2 * w * w)
            return J

    p_new = np.concatenate([system.params, [alpha, beta]])
    return DynSystem(
        n=n + 2,
        rhs=rhs,
        params=p_new,
        param_names=system.param_names + ("alpha", "beta"),
        jac_x=jac_x,
        jac_p=None,
        autonomous=True,
        state_names=system.state_names + ("v", "w"),
        name=system.name,
        info={**system.info, "forced": True, "unforced_dim": n},
    )
