"""Smoothest Gaussian-mixture densities under specifications.

A density ``f = r**2`` is represented through its square root ``r``, itself a
positively weighted sum of Gaussian kernels.  The Fisher information of
``f`` is a quadratic form in the root weights, and ``f`` expands exactly into
an ordinary Gaussian mixture where moment, value, derivative and interval
specifications are evaluated.
"""

__version__ = "0.1.0"

from .constraints import DerivativeSpec, IntervalProbSpec, MomentSpec, ValueSpec, residual, residual_vector
from .errors import (
    AccuracyError,
    ContractError,
    DimensionError,
    DivergenceError,
    FitError,
    InfeasibleError,
    NumericError,
    UnsupportedError,
)
from .gaussian import Gaussian, bilinear_expectation, interval_mass, product
from .mixture import GaussianMixture
from .optimizer import Options, Problem, Solution, decode, encode, objective, solve
from .root import (
    RootMixture,
    component_count,
    expand,
    fisher_information_root,
    fit_root_mixture,
    gram_matrix,
    inverse_count,
    normalize,
    split_to,
)

__all__ = [
    "AccuracyError", "ContractError", "DerivativeSpec", "DimensionError", "DivergenceError", "FitError",
    "Gaussian", "GaussianMixture", "InfeasibleError", "IntervalProbSpec", "MomentSpec", "NumericError",
    "Options", "Problem", "RootMixture", "Solution", "UnsupportedError", "ValueSpec", "bilinear_expectation",
    "component_count", "decode", "encode", "expand", "fisher_information_root", "fit_root_mixture",
    "gram_matrix", "interval_mass", "inverse_count", "normalize", "objective", "product", "residual",
    "residual_vector", "solve", "split_to",
]
