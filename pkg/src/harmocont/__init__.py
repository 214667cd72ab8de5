"""Continuation of periodic orbits constrained by their Fourier coefficients.

Equilibria are followed to Hopf points, small cycles are started there and
continued as collocation boundary value problems whose unknowns include
selected harmonic coefficients and a scalar test function of them.  Pinning
that test function yields two-parameter iso-harmonic, iso-ratio, iso-energy
or iso-period curves.
"""
from .branch import BranchPoint, ContinuationBranch, StepConfig
from .collocation import (
    Mesh,
    PeriodicBVP,
    PeriodicOrbit,
    adapt_mesh,
    eval_orbit,
    newton_correct,
)
from .dynsys import AuxOscillator, DynSystem, ForcingBinding, autonomize, eval_rhs, jacobian_x
from .equilibria import HopfPoint, continue_equilibria, hopf_test, locate_hopf
from .errors import (
    ConfigurationError,
    ContractError,
    ConvergenceError,
    DegenerateRatioError,
    ExportError,
    HarmocontError,
    NumericalError,
    SingularMatrixError,
    StarterError,
)
from .harmonic import (
    AmplitudeRatio,
    FourierSpec,
    HarmonicAmplitude,
    HarmonicCoefficients,
    HarmonicEnergy,
    PeriodValue,
    continue_iso,
    continue_with_harmonics,
    fourier_coefficient,
    harmonic_coefficients,
    hopf_starter,
    kref_value,
    starter_orbit,
    two_sided,
)
from .models import (
    ColpittsParams,
    NDOParams,
    colpitts_system,
    colpitts_to_circuit_plane,
    circuit_to_colpitts_plane,
    ndo_autonomous_system,
)

__version__ = "0.1.0"
