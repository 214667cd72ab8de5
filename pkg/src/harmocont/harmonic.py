"""Fourier coefficients of periodic orbits, harmonic test functions, the
Hopf starter and the harmonic continuation drivers.

Coefficients follow the sine/cosine convention

    x_j(t) = a_0j + sum_k [a_kj sin(k w t) + b_kj cos(k w t)],

with state indices ``j`` counted from 1.  On the unit interval the
projections become ``a_kj = int_0^1 2 x_j(s) sin(2 pi k s) ds``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .branch import ContinuationBranch, StepConfig
from .collocation import (
    Closing,
    FourierConstraint,
    KRefConstraint,
    Mesh,
    OrbitContinuation,
    PeriodicBVP,
    PeriodicOrbit,
    PhaseCondition,
    fourier_slot,
    newton_correct,
    pin,
)
from .dynsys import DynSystem, eval_rhs
from .equilibria import HopfPoint
from .errors import (
    ConfigurationError,
    ContractError,
    ConvergenceError,
    DegenerateRatioError,
    StarterError,
)

log = logging.getLogger(__name__)

EPS_RATIO = 1e-8


# --------------------------------------------------------------------------
# coefficients


def fourier_coefficient(orbit: PeriodicOrbit, k: int, j: int) -> tuple[float, float]:
    """``(a_kj, b_kj)`` by Gauss quadrature of the collocation polynomial
    (exact up to rounding, see :meth:`Mesh.projection_weights`).

    ``k = 0`` returns ``(mean, 0)``.  ``j`` is 1-based.
    """
    if k < 0:
        raise ContractError(f"harmonic index must be >= 0, got {k}")
    if not 1 <= j <= orbit.n:
        raise ContractError(f"state index {j} outside 1..{orbit.n}")
    mesh = orbit.mesh
    x = orbit.states[:, j - 1]
    if k == 0:
        return float(mesh.projection_weights(0) @ x), 0.0
    return float(mesh.projection_weights(k, "sin") @ x), float(mesh.projection_weights(k, "cos") @ x)


@dataclass
class HarmonicCoefficients:
    """Sine/cosine coefficients ``(k, j) -> (a, b)``, means ``j -> a_0j`` and period."""

    coeffs: dict = field(default_factory=dict)
    means: dict = field(default_factory=dict)
    period: float = float("nan")

    def amplitude(self, k: int, j: int) -> float:
        a, b = self.coeffs[(k, j)]
        return float(np.hypot(a, b))

    def values(self) -> dict:
        """Flat mapping in slot naming (``a[k,j]``, ``b[k,j]``, ``T``)."""
        out = {"T": self.period}
        for (k, j), (a, b) in self.coeffs.items():
            out[fourier_slot("sin", k, j)] = a
            out[fourier_slot("cos", k, j)] = b
        return out

    def reconstruct(self, s, j: int, kmax: int | None = None) -> np.ndarray:
        """Truncated series of state ``j`` at scaled times ``s``."""
        s = np.asarray(s, dtype=float)
        out = np.full(s.shape, self.means.get(j, 0.0))
        for (k, jj), (a, b) in self.coeffs.items():
            if jj != j or (kmax is not None and k > kmax):
                continue
            out = out + a * np.sin(2 * np.pi * k * s) + b * np.cos(2 * np.pi * k * s)
        return out


def harmonic_coefficients(orbit: PeriodicOrbit, kmax: int, states=None) -> HarmonicCoefficients:
    states = range(1, orbit.n + 1) if states is None else states
    hc = HarmonicCoefficients(period=orbit.period)
    for j in states:
        hc.means[j] = fourier_coefficient(orbit, 0, j)[0]
        for k in range(1, kmax + 1):
            hc.coeffs[(k, j)] = fourier_coefficient(orbit, k, j)
    return hc


def fft_coefficients(samples, kmax: int):
    """Oracle: ``(a_k, b_k)`` for ``k = 0..kmax`` from equispaced samples on [0, 1)."""
    samples = np.asarray(samples, dtype=float)
    c = np.fft.rfft(samples) / samples.size
    a = -2 * c.imag[: kmax + 1]
    b = 2 * c.real[: kmax + 1]
    a[0], b[0] = c.real[0], 0.0
    return a, b


# --------------------------------------------------------------------------
# test functions


def _amp(values, k, j):
    a = values[fourier_slot("sin", k, j)]
    b = values[fourier_slot("cos", k, j)]
    return a, b, float(np.hypot(a, b))


class HarmonicAmplitude:
    """``K = sqrt(a_kj^2 + b_kj^2)``."""

    name = "harmonic"

    def __init__(self, k: int, j: int):
        self.k, self.j = int(k), int(j)

    def requires(self):
        return (fourier_slot("sin", self.k, self.j), fourier_slot("cos", self.k, self.j))

    def value(self, values) -> float:
        _, _, A = _amp(values, self.k, self.j)
        if A < EPS_RATIO:
            raise DegenerateRatioError(f"amplitude A[{self.k},{self.j}] = {A:.2e} is too small")
        return A

    def gradient(self, values) -> dict:
        a, b, A = _amp(values, self.k, self.j)
        if A < EPS_RATIO:
            raise DegenerateRatioError(f"amplitude A[{self.k},{self.j}] = {A:.2e} is too small")
        sa, sb = self.requires()
        return {sa: a / A, sb: b / A}

    def describe(self):
        return {"kind": self.name, "k": self.k, "j": self.j}


class AmplitudeRatio:
    """``K = A_p / A_q`` on state ``j``."""

    name = "ratio"

    def __init__(self, p: int, q: int, j: int):
        self.p, self.q, self.j = int(p), int(q), int(j)

    def requires(self):
        return tuple(fourier_slot(t, k, self.j) for k in (self.p, self.q) for t in ("sin", "cos"))

    def _parts(self, values):
        ap, bp, Ap = _amp(values, self.p, self.j)
        aq, bq, Aq = _amp(values, self.q, self.j)
        if Aq < EPS_RATIO:
            raise DegenerateRatioError(
                f"denominator amplitude A[{self.q},{self.j}] = {Aq:.2e} is below {EPS_RATIO}"
            )
        return ap, bp, Ap, aq, bq, Aq

    def value(self, values) -> float:
        _, _, Ap, _, _, Aq = self._parts(values)
        return Ap / Aq

    def gradient(self, values) -> dict:
        ap, bp, Ap, aq, bq, Aq = self._parts(values)
        if Ap < EPS_RATIO:
            raise DegenerateRatioError(f"numerator amplitude A[{self.p},{self.j}] vanished")
        sap, sbp, saq, sbq = self.requires()
        r = Ap / Aq
        return {sap: ap / (Ap * Aq), sbp: bp / (Ap * Aq), saq: -r * aq / Aq**2, sbq: -r * bq / Aq**2}

    def describe(self):
        return {"kind": self.name, "p": self.p, "q": self.q, "j": self.j}


class HarmonicEnergy:
    """``K = sum A_k^2`` over a set of ``(k, j)`` pairs."""

    name = "energy"

    def __init__(self, pairs):
        self.pairs = tuple((int(k), int(j)) for k, j in pairs)
        if not self.pairs:
            raise ConfigurationError("energy test function needs at least one harmonic")

    def requires(self):
        return tuple(fourier_slot(t, k, j) for k, j in self.pairs for t in ("sin", "cos"))

    def value(self, values) -> float:
        return float(sum(values[s] ** 2 for s in self.requires()))

    def gradient(self, values) -> dict:
        return {s: 2 * values[s] for s in self.requires()}

    def describe(self):
        return {"kind": self.name, "pairs": [list(p) for p in self.pairs]}


class PeriodValue:
    """``K = T / scale``: pins the period, with no Fourier slots needed."""

    name = "period"

    def __init__(self, scale: float = 1.0):
        self.scale = float(scale)

    def requires(self):
        return ()

    def value(self, values) -> float:
        return values["T"] / self.scale

    def gradient(self, values) -> dict:
        return {"T": 1.0 / self.scale}

    def describe(self):
        return {"kind": self.name, "scale": self.scale}


KREF_KINDS = {
    "harmonic": HarmonicAmplitude,
    "ratio": AmplitudeRatio,
    "energy": HarmonicEnergy,
    "period": PeriodValue,
}


def make_kref(kind: str, **kwargs):
    try:
        cls = KREF_KINDS[kind]
    except KeyError:
        raise ConfigurationError(f"unknown K_REF kind {kind!r}; use one of {sorted(KREF_KINDS)}") from None
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigurationError(f"bad arguments for K_REF kind {kind!r}: {exc}") from None


def kref_value(coeffs: HarmonicCoefficients, kind, T: float | None = None) -> float:
    values = coeffs.values()
    if T is not None:
        values["T"] = T
    return kind.value(values)


# --------------------------------------------------------------------------
# carried coefficients and test function


@dataclass
class FourierSpec:
    """Monitored/pinned sine slots ``S_a``, cosine slots ``S_b`` and the test function."""

    sin: tuple = ()
    cos: tuple = ()
    kref: object = None

    def __post_init__(self):
        self.sin = tuple((int(k), int(j)) for k, j in self.sin)
        self.cos = tuple((int(k), int(j)) for k, j in self.cos)
        for label, pairs in (("S_a", self.sin), ("S_b", self.cos)):
            if len(set(pairs)) != len(pairs):
                raise ConfigurationError(f"duplicate entries in {label}: {pairs}")
            for k, j in pairs:
                if k < 1:
                    raise ConfigurationError(f"{label} entry ({k},{j}): harmonic index must be >= 1")
                if j < 1:
                    raise ConfigurationError(f"{label} entry ({k},{j}): state index must be >= 1")

    @property
    def n_a(self) -> int:
        return len(self.sin)

    @property
    def n_b(self) -> int:
        return len(self.cos)

    @property
    def n_constraints(self) -> int:
        return 1 + self.n_a + self.n_b + (self.kref is not None)

    def slots(self) -> list:
        return [fourier_slot("sin", k, j) for k, j in self.sin] + [
            fourier_slot("cos", k, j) for k, j in self.cos
        ]

    def validate(self, n: int | None = None):
        if n is not None:
            for k, j in self.sin + self.cos:
                if j > n:
                    raise ConfigurationError(f"state index {j} exceeds system dimension {n}")
        if self.kref is not None:
            have = set(self.slots())
            missing = [s for s in self.kref.requires() if s not in have]
            if missing:
                raise ConfigurationError(f"K_REF needs {missing}, which are not in S_a / S_b")

    def constraints(self, reference: PeriodicOrbit) -> list:
        out = [PhaseCondition(reference)]
        out += [FourierConstraint("sin", k, j) for k, j in self.sin]
        out += [FourierConstraint("cos", k, j) for k, j in self.cos]
        if self.kref is not None:
            out.append(KRefConstraint(self.kref))
        return out

    def amplitude_pairs(self):
        return sorted(set(self.sin) & set(self.cos))


def required_free_count(n_a: int, n_b: int, kref: bool = True) -> int:
    """Free scalars needed: ``n_a + n_b + 3`` with a test function."""
    return n_a + n_b + (3 if kref else 2)


def fill_slots(orbit: PeriodicOrbit, spec: FourierSpec, overwrite=False) -> PeriodicOrbit:
    """Set Fourier slots (and ``K``) of ``orbit`` from quadrature where missing."""
    extras = dict(orbit.extras)
    for k, j in spec.sin:
        s = fourier_slot("sin", k, j)
        if overwrite or s not in extras:
            extras[s] = fourier_coefficient(orbit, k, j)[0]
    for k, j in spec.cos:
        s = fourier_slot("cos", k, j)
        if overwrite or s not in extras:
            extras[s] = fourier_coefficient(orbit, k, j)[1]
    out = orbit.copy()
    out.extras = extras
    if spec.kref is not None and (overwrite or "K" not in extras):
        out.extras["K"] = spec.kref.value(out.values())
    return out


def amplitude_monitor(pairs):
    """Monitor reporting ``A[k,j]`` for each pair, computed post hoc."""
    pairs = [tuple(p) for p in pairs]

    def monitor(orbit):
        out = {}
        for k, j in pairs:
            a, b = fourier_coefficient(orbit, k, j)
            out[f"A[{k},{j}]"] = float(np.hypot(a, b))
        return out

    return monitor


# --------------------------------------------------------------------------
# Hopf starter


def hopf_starter(hopf: HopfPoint, system: DynSystem, epsilon: float, mesh: Mesh | None = None,
                 tol: float = 1e-10):
    """Small periodic orbit near a Hopf point and its first-harmonic coefficients.

    The guess ``x* + eps Re(q exp(2 pi i s))`` with ``T = 2 pi / omega`` is
    corrected once by Newton (free: the Hopf parameter and ``T``; closing
    row: pseudo-arclength from the equilibrium along the guess).  The
    coefficients are the first-order estimates ``a_1j = x_j'(0) / omega``,
    ``b_1j = x_j(0) - x*_j``, mean ``x*_j`` and zero higher harmonics.
    """
    mesh = Mesh.uniform() if mesh is None else mesh
    eq = hopf.equilibrium
    if hopf.omega <= 0:
        raise ContractError("Hopf frequency must be positive")
    sys_h = system.with_params(**dict(zip(system.param_names, eq.params)))
    q = hopf.eigenvector
    s = mesh.points
    phase = np.exp(2j * np.pi * s)
    dev = epsilon * np.real(q[None, :] * phase[:, None])
    T = 2 * np.pi / hopf.omega
    guess = PeriodicOrbit(mesh, eq.x[None, :] + dev, T, eq.params.copy(), system.param_names)
    trivial = PeriodicOrbit(mesh, np.tile(eq.x, (mesh.npoints, 1)), T, eq.params.copy(), system.param_names)

    problem = PeriodicBVP(sys_h, [PhaseCondition(guess)], [hopf.param, "T"])
    direction = problem.pack(guess) - problem.pack(trivial)
    row = problem.weights(mesh) * direction
    closing = Closing(row, float(row @ problem.pack(guess)))
    try:
        corrected = newton_correct(problem, guess, closing, tol=tol).orbit
    except ConvergenceError as exc:
        raise StarterError(
            f"Newton correction of the Hopf starter failed for epsilon={epsilon:g} ({exc}); "
            "try a smaller epsilon"
        ) from exc

    x0 = guess.states[0]
    xdot0 = eval_rhs(sys_h, x0, 0.0, eq.params)
    hc = HarmonicCoefficients(period=T)
    for j in range(1, system.n + 1):
        hc.means[j] = float(eq.x[j - 1])
        hc.coeffs[(1, j)] = (float(xdot0[j - 1] / hopf.omega), float(x0[j - 1] - eq.x[j - 1]))
    return corrected, hc


def starter_orbit(orbit: PeriodicOrbit, coeffs: HarmonicCoefficients, spec: FourierSpec) -> PeriodicOrbit:
    """Attach starter estimates to the Fourier slots of ``spec`` (zero where absent)."""
    out = orbit.copy()
    for k, j in spec.sin:
        out.extras[fourier_slot("sin", k, j)] = coeffs.coeffs.get((k, j), (0.0, 0.0))[0]
    for k, j in spec.cos:
        out.extras[fourier_slot("cos", k, j)] = coeffs.coeffs.get((k, j), (0.0, 0.0))[1]
    if spec.kref is not None:
        out.extras["K"] = spec.kref.value(out.values())
    return out


# --------------------------------------------------------------------------
# drivers


def _harmonic_problem(system, spec, reference, free):
    spec.validate(system.n)
    return PeriodicBVP(system, spec.constraints(reference), free)


def _prepare(problem, orbit, spec, fix):
    orbit = fill_slots(orbit, spec)
    try:
        return newton_correct(problem, orbit, pin(problem, orbit, fix)).orbit
    except ConvergenceError as exc:
        raise ConvergenceError(f"start orbit does not satisfy the harmonic BVP: {exc}") from exc


def continue_with_harmonics(
    start: PeriodicOrbit,
    system: DynSystem,
    spec: FourierSpec,
    free_param: str,
    config: StepConfig | None = None,
    direction: float = 1.0,
    monitor_pairs=(),
) -> ContinuationBranch:
    """Continue periodic orbits in one system parameter while measuring the
    Fourier slots of ``spec`` and its test function ``K``.

    Free scalars: ``(free_param, T, S_a, S_b, K)``.
    """
    cont, start = harmonic_continuation(start, system, spec, free_param, config, monitor_pairs)
    return cont.run(start, direction)


def harmonic_continuation(start, system, spec, free_param, config=None, monitor_pairs=()):
    """Continuation object and corrected start orbit behind
    :func:`continue_with_harmonics`."""
    free = [free_param, "T"] + spec.slots() + (["K"] if spec.kref is not None else [])
    problem = _harmonic_problem(system.with_params(**_params_of(start)), spec, start, free)
    start = _prepare(problem, start, spec, free_param)
    pairs = sorted(set(spec.amplitude_pairs()) | {tuple(p) for p in monitor_pairs})
    return OrbitContinuation(problem, config, amplitude_monitor(pairs), primary=free_param), start


def continue_iso(
    start: PeriodicOrbit,
    system: DynSystem,
    spec: FourierSpec,
    params: tuple,
    config: StepConfig | None = None,
    direction: float = 1.0,
    monitor_pairs=(),
    k_tol: float = 1e-8,
) -> ContinuationBranch:
    """Two-parameter continuation with the test-function value pinned.

    ``start.extras["K"]`` is the pinned value ``K0``.  Free scalars:
    ``(p1, p2, T, S_a, S_b)``.
    """
    cont, start = iso_continuation(start, system, spec, params, config, monitor_pairs, k_tol)
    return cont.run(start, direction)


def iso_continuation(start, system, spec, params, config=None, monitor_pairs=(), k_tol=1e-8):
    """Continuation object and corrected start orbit behind :func:`continue_iso`."""
    if spec.kref is None:
        raise ConfigurationError("iso continuation needs a K_REF test function")
    if len(params) != 2:
        raise ConfigurationError(f"iso continuation needs two system parameters, got {params}")
    if "K" not in start.extras:
        raise ContractError("start orbit carries no pinned K value")
    K0 = start.extras["K"]
    probe = fill_slots(start, spec, overwrite=True)
    kval = spec.kref.value(probe.values())
    if abs(kval - K0) > k_tol:
        raise ContractError(f"start orbit has K = {kval:.12g}, not the pinned {K0:.12g}")
    free = list(params) + ["T"] + spec.slots()
    problem = _harmonic_problem(system.with_params(**_params_of(start)), spec, start, free)
    start = _prepare(problem, start, spec, params[0])
    pairs = sorted(set(spec.amplitude_pairs()) | {tuple(p) for p in monitor_pairs})
    cont = OrbitContinuation(problem, config, amplitude_monitor(pairs), primary=params[0])
    return cont, start


def two_sided(run, *args, **kwargs) -> ContinuationBranch:
    """Run a driver in both directions and join the halves into one branch
    ordered from the negative end to the positive end."""
    fwd = run(*args, direction=1.0, **kwargs)
    bwd = run(*args, direction=-1.0, **kwargs)
    out = ContinuationBranch(free=fwd.free)
    out.points = list(reversed(bwd.points[1:])) + list(fwd.points)
    out.stalled = fwd.stalled or bwd.stalled
    out.message = f"backward: {bwd.message}; forward: {fwd.message}"
    return out


def _params_of(orbit: PeriodicOrbit) -> dict:
    return dict(zip(orbit.param_names, map(float, orbit.params)))
