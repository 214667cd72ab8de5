"""Case-study oscillators: the normalized Colpitts model and the nonlinear
damped (shock absorber) oscillator, plus conversions to circuit units."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .dynsys import DynSystem, ForcingBinding, autonomize
from .errors import ConfigurationError, ParameterDomainError

V_T = 25.9e-3


@dataclass(frozen=True)
class ColpittsParams:
    """Normalized Colpitts parameters and the physical values behind them.

    ``L`` defaults to 1 mH.  The circuit figure of the original design quotes
    10 mH; only the (R, I0) scaling depends on this choice.
    """

    Q: float = 0.8
    G: float = 2.0
    gamma: float = 0.5
    alpha_F: float = 1.0
    C1: float = 1e-6
    C2: float = 1e-6
    L: float = 1e-3
    V_T: float = V_T

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ParameterDomainError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.Q <= 0 or self.G <= 0:
            raise ParameterDomainError(f"Q and G must be positive, got Q={self.Q}, G={self.G}")
        if min(self.C1, self.C2, self.L, self.V_T) <= 0:
            raise ParameterDomainError("C1, C2, L and V_T must be positive")

    @property
    def T0(self) -> float:
        """Time unit of the normalized model, in seconds."""
        return float(np.sqrt(self.L * self.C1 * self.C2 / (self.C1 + self.C2)))

    @property
    def omega0(self) -> float:
        return 1.0 / self.T0

    def to_dict(self):
        return asdict(self)


def _colpitts_rhs(x, t, p):
    G, Q, g, aF = p[0], p[1], p[2], p[3]
    e = np.exp(-x[1]) - 1.0
    return np.stack(
        [
            G / (Q * (1 - g)) * (-aF * e + x[2]),
            G / (Q * g) * ((1 - aF) * e + x[2]),
            -Q * g * (1 - g) / G * (x[0] + x[1]) - x[2] / Q,
        ]
    )


def _colpitts_jac(x, t, p):
    G, Q, g, aF = p[0], p[1], p[2], p[3]
    ey = np.exp(-x[1])
    zero = np.zeros_like(x[0])
    k3 = -Q * g * (1 - g) / G + zero
    return np.array(
        [
            [zero, G / (Q * (1 - g)) * aF * ey, G / (Q * (1 - g)) + zero],
            [zero, -G / (Q * g) * (1 - aF) * ey, G / (Q * g) + zero],
            [k3, k3, -1.0 / Q + zero],
        ]
    )


def _colpitts_jac_p(x, t, p):
    G, Q, g, aF = p[0], p[1], p[2], p[3]
    e = np.exp(-x[1]) - 1.0
    z = x[2]
    s = x[0] + x[1]
    f1 = -aF * e + z
    f2 = (1 - aF) * e + z
    zero = np.zeros_like(x[0])
    return np.array(
        [
            [f1 / (Q * (1 - g)), -G / (Q * Q * (1 - g)) * f1, G / (Q * (1 - g) ** 2) * f1, -G / (Q * (1 - g)) * e],
            [f2 / (Q * g), -G / (Q * Q * g) * f2, -G / (Q * g * g) * f2, -G / (Q * g) * e],
            [
                Q * g * (1 - g) / G**2 * s,
                -g * (1 - g) / G * s + z / Q**2,
                -Q * (1 - 2 * g) / G * s,
                zero,
            ],
        ]
    )


def colpitts_system(params: ColpittsParams | None = None) -> DynSystem:
    """Three-state Colpitts model in (x, y, z); parameters (G, Q, gamma, alpha_F)."""
    params = ColpittsParams() if params is None else params
    return DynSystem(
        n=3,
        rhs=_colpitts_rhs,
        params=[params.G, params.Q, params.gamma, params.alpha_F],
        param_names=("G", "Q", "gamma", "alpha_F"),
        jac_x=_colpitts_jac,
        jac_p=_colpitts_jac_p,
        state_names=("x", "y", "z"),
        name="colpitts",
        info={"physical": params.to_dict()},
    )


def colpitts_to_circuit_plane(Q, G, params: ColpittsParams | None = None):
    """Map normalized (Q, G) to resistance R [ohm] and bias current I0 [A]."""
    params = ColpittsParams() if params is None else params
    Q = np.asarray(Q, dtype=float)
    G = np.asarray(G, dtype=float)
    if np.any(Q <= 0) or np.any(G <= 0):
        raise ParameterDomainError("Q and G must be positive")
    R = params.omega0 * params.L / Q
    I0 = G * params.V_T * R * (params.C1 + params.C2) / params.L
    return R, I0


def circuit_to_colpitts_plane(R, I0, params: ColpittsParams | None = None):
    params = ColpittsParams() if params is None else params
    R = np.asarray(R, dtype=float)
    I0 = np.asarray(I0, dtype=float)
    if np.any(R <= 0) or np.any(I0 <= 0):
        raise ParameterDomainError("R and I0 must be positive")
    Q = params.omega0 * params.L / R
    G = I0 * params.L / (params.V_T * R * (params.C1 + params.C2))
    return Q, G


# With A = 1000 the T-periodic response has two folds just below the linear
# resonance.  Much larger amplitudes remove them: the folded part of the
# curve is replaced by a smooth but non-monotone response.
NDO_DEFAULT_A = 1000.0


@dataclass(frozen=True)
class NDOParams:
    """Nonlinear damped oscillator ``m x' = A cos(wt) - (c1 x + c2 x^2 + c3 x^3 + k y)``, ``y' = x``."""

    m: float = 240.0
    c1: float = 296.0
    c2: float = 3000.0
    c3: float = 800.0
    k: float = 240.0 * (4 * np.pi) ** 2
    A: float = NDO_DEFAULT_A
    omega: float = 4 * np.pi

    def __post_init__(self):
        if self.m <= 0 or self.k <= 0:
            raise ParameterDomainError(f"m and k must be positive, got m={self.m}, k={self.k}")

    @property
    def omega0(self) -> float:
        return float(np.sqrt(self.k / self.m))

    def to_dict(self):
        return asdict(self)


NDO_PARAM_NAMES = ("m", "c1", "c2", "c3", "k", "A")


def _ndo_rhs(x, t, p):
    m, c1, c2, c3, k = p[0], p[1], p[2], p[3], p[4]
    v = x[0]
    return np.stack([-(c1 * v + c2 * v * v + c3 * v**3 + k * x[1]) / m, v + 0 * x[1]])


def _ndo_jac(x, t, p):
    m, c1, c2, c3, k = p[0], p[1], p[2], p[3], p[4]
    v = x[0]
    zero = np.zeros_like(v)
    return np.array(
        [
            [-(c1 + 2 * c2 * v + 3 * c3 * v * v) / m, -k / m + zero],
            [1.0 + zero, zero],
        ]
    )


def ndo_unforced_system(params: NDOParams | None = None) -> DynSystem:
    """The shock-absorber model with the cosine forcing removed."""
    params = NDOParams() if params is None else params
    return DynSystem(
        n=2,
        rhs=_ndo_rhs,
        params=[params.m, params.c1, params.c2, params.c3, params.k, params.A],
        param_names=NDO_PARAM_NAMES,
        jac_x=_ndo_jac,
        state_names=("x", "y"),
        name="ndo",
        info={"physical": params.to_dict()},
    )


def ndo_forced_rhs(params: NDOParams | None = None):
    """Time-dependent right-hand side ``f(t, s)`` for direct simulation."""
    params = NDOParams() if params is None else params
    m, c1, c2, c3, k, A, w = (
        params.m, params.c1, params.c2, params.c3, params.k, params.A, params.omega,
    )

    def f(t, s):
        v, y = s[0], s[1]
        return [A / m * np.cos(w * t) - (c1 * v + c2 * v * v + c3 * v**3 + k * y) / m, v]

    return f


def ndo_autonomous_system(params: NDOParams | None = None, alpha: float = 1.0) -> DynSystem:
    """Four-state autonomous version (x, y, v, w) with forcing ``(A/m) w``."""
    params = NDOParams() if params is None else params
    binding = ForcingBinding(target=0, gain=lambda p: p[5] / p[0], channel="w")
    return autonomize(ndo_unforced_system(params), [binding], beta=params.omega, alpha=alpha)


# Region of the (R, I0) plane charted for the Colpitts oscillator: the band
# of simple, stable cycles between the Hopf line and the complex-dynamics zone.
COLPITTS_CHART_REGION = {"R": (25.0, 150.0), "I0": (0.0, 0.05)}


def derived_columns(name: str, params, values: dict) -> dict:
    """Physical quantities derived from a branch point, used as extra columns.

    Colpitts points gain ``R`` [ohm] and ``I0`` [A]; damped-oscillator points
    gain the normalized forcing frequency and amplitude.
    """
    if name == "colpitts":
        if "Q" in values and "G" in values and values["Q"] > 0 and values["G"] > 0:
            R, I0 = colpitts_to_circuit_plane(values["Q"], values["G"], params)
            return {"R": float(R), "I0": float(I0)}
        return {}
    if name == "ndo":
        out = {}
        if "beta" in values:
            out["omega/omega0"] = values["beta"] / params.omega0
        if "A" in values and "m" in values:
            out["A/m"] = values["A"] / values["m"]
        return out
    return {}


COLUMN_UNITS = {"R": "ohm", "I0": "A"}


CATALOG = {
    "colpitts": (ColpittsParams, colpitts_system),
    "ndo": (NDOParams, ndo_autonomous_system),
}


def build_model(name: str, overrides: dict | None = None, **kwargs):
    """Return ``(system, params)`` for a catalog model with overridden fields."""
    try:
        params_cls, ctor = CATALOG[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown model {name!r}; available: {', '.join(sorted(CATALOG))}"
        ) from None
    try:
        params = params_cls(**(overrides or {}))
    except TypeError as exc:
        raise ConfigurationError(f"bad parameter override for {name}: {exc}") from None
    return ctor(params, **kwargs), params
