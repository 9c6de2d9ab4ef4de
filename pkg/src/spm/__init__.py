"""Spectral Galerkin simulator for stochastic porous medium dynamics.

The package solves dX = Lap(Phi(X)) dt + Q dW on a 1-D Dirichlet interval
by the shifted substitution Z = X - QW, certifies structural hypotheses on
the nonlinearity Phi, verifies pathwise energy inequalities along computed
trajectories, and runs pullback experiments (absorption, contraction,
single-point attractor, invariant-measure sampling).
"""

__version__ = "0.1.0"

from .domain import Domain, SpectralField
from .nonlinearity import (
    Certificate,
    CertificationError,
    Custom,
    DeadZoneCubic,
    Hypothesis,
    MollifiedExp,
    Nonlinearity,
    PowerLaw,
    certify,
)
from .noise import NoiseOperator, WienerPath, noise_growth_report, qw, wiener_shift
from .integrator import SolverConfig, SolverError, Trajectory, check_cocycle, solve, step
from .estimates import (
    EstimateConfig,
    check_decay_bound,
    check_gradient_energy,
    check_h_energy,
    check_l2_energy,
    derive_constants,
    gradient_forcing,
    h_forcing,
    l2_forcing,
)
from .attractor import (
    absorption_radius,
    contraction_check,
    estimate_eta0,
    pullback_ensemble,
    sample_invariant_measure,
)

__all__ = [
    "Domain",
    "SpectralField",
    "Nonlinearity",
    "PowerLaw",
    "DeadZoneCubic",
    "MollifiedExp",
    "Custom",
    "Hypothesis",
    "Certificate",
    "CertificationError",
    "certify",
    "WienerPath",
    "NoiseOperator",
    "qw",
    "wiener_shift",
    "noise_growth_report",
    "SolverConfig",
    "SolverError",
    "Trajectory",
    "step",
    "solve",
    "check_cocycle",
    "EstimateConfig",
    "derive_constants",
    "h_forcing",
    "l2_forcing",
    "gradient_forcing",
    "check_h_energy",
    "check_l2_energy",
    "check_gradient_energy",
    "check_decay_bound",
    "pullback_ensemble",
    "contraction_check",
    "estimate_eta0",
    "sample_invariant_measure",
    "absorption_radius",
]
