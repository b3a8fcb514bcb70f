"""Numerical laboratory for broken quasilinear elliptic equations.

Solves ``div(A(x, u) grad u) = div f`` where the conductivity jumps (``s = 0``)
or loses smoothness (``s > 0``) across ``{u = 0}``, then measures the nodal set,
vanishing orders and frequencies of the solution.
"""

__version__ = "0.1.0"

from .coefficients import CoefficientModel, check_structure
from .errors import (
    BrokenPDEError,
    ConfigError,
    DegenerateGradient,
    DegenerateH,
    EvalError,
    ExprSyntaxError,
    NoConvergence,
    NonDifferentiable,
    NoSignChange,
    OutOfBounds,
    RadiiTooSmall,
    UnknownIdentifier,
    WrongRegime,
    ZeroPolynomial,
)
from .exprlang import differentiate, evaluate, parse
from .grid import GridSpec, ScalarField, VectorField, interpolate, sample
from .nodal import NodalSet, extract_nodal, nodal_length, normal_at, sign_measures
from .oracles import harmonic_inversion_exact, transmission_1d
from .solver import BrokenProblem, SolveReport, assemble, picard_solve, solve_linear
from .transforms import phi_freeze, phi_s, phi_s_inverse, sigma_freeze, w_transform
from .analysis import (
    FrequencyProfile,
    OrderEstimate,
    frequency,
    frequency_profile,
    harmonic_fit,
    tangent_dim,
    vanishing_order,
)

__all__ = [
    "BrokenPDEError",
    "BrokenProblem",
    "CoefficientModel",
    "ConfigError",
    "DegenerateGradient",
    "DegenerateH",
    "EvalError",
    "ExprSyntaxError",
    "FrequencyProfile",
    "GridSpec",
    "NoConvergence",
    "NoSignChange",
    "NodalSet",
    "NonDifferentiable",
    "OrderEstimate",
    "OutOfBounds",
    "RadiiTooSmall",
    "ScalarField",
    "SolveReport",
    "UnknownIdentifier",
    "VectorField",
    "WrongRegime",
    "ZeroPolynomial",
    "assemble",
    "check_structure",
    "differentiate",
    "evaluate",
    "extract_nodal",
    "frequency",
    "frequency_profile",
    "harmonic_fit",
    "harmonic_inversion_exact",
    "interpolate",
    "nodal_length",
    "normal_at",
    "parse",
    "phi_freeze",
    "phi_s",
    "phi_s_inverse",
    "picard_solve",
    "sample",
    "sigma_freeze",
    "sign_measures",
    "solve_linear",
    "tangent_dim",
    "transmission_1d",
    "vanishing_order",
    "w_transform",
]
