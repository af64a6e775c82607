"""Simulation, likelihood evaluation and consistency diagnostics for
partially observed Markov chains: a reflected random-walk HMM with heavy-tailed
increments and two observation-driven GARCH-type count/mixture models."""
from .distributions import (
    Gaussian,
    GaussianMixture,
    NegativeBinomial,
    NoisePair,
    SymmetricPareto,
    gauss_logpdf,
    mixture_gauss_logpdf,
    nb_logpmf,
    pareto_sym_cdf,
    pareto_sym_logpdf,
    sample,
)
from .errors import (
    CensoringWarning,
    ConvergenceError,
    DegeneracyWarning,
    DimensionMismatch,
    EmptyPath,
    InstabilityError,
    InsufficientData,
    InvalidParameter,
    InvalidState,
    PomcError,
)
from .rng import RngStream

__version__ = "0.1.0"

__all__ = [
    "CensoringWarning", "ConvergenceError", "DegeneracyWarning", "DimensionMismatch",
    "EmptyPath", "Gaussian", "GaussianMixture", "InstabilityError", "InsufficientData",
    "InvalidParameter", "InvalidState", "NegativeBinomial", "NoisePair", "PomcError",
    "RngStream", "SymmetricPareto", "gauss_logpdf", "mixture_gauss_logpdf", "nb_logpmf",
    "pareto_sym_cdf", "pareto_sym_logpdf", "sample", "__version__",
]
