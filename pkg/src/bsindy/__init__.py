"""Sparse identification of ODEs by Gaussian-evidence maximisation with noise propagation."""

from .derivatives import (DerivativeOperators, Stencil, build_operators, central_difference_stencil,
                          make_stencil, weak_form_stencil)
from .dynamics import TimeSeries, add_noise, builtin, integrate, load_csv, save_csv, simulate
from .library import FeatureLibrary, TermDescriptor, build_library, polynomial_terms
from .regression import FitConfig, FittedModel, Problem, fit, fit_bsindy, fit_stls

__version__ = "0.1.0"

__all__ = [
    "DerivativeOperators", "Stencil", "build_operators", "central_difference_stencil",
    "make_stencil", "weak_form_stencil", "TimeSeries", "add_noise", "builtin", "integrate",
    "load_csv", "save_csv", "simulate", "FeatureLibrary", "TermDescriptor", "build_library",
    "polynomial_terms", "FitConfig", "FittedModel", "Problem", "fit", "fit_bsindy", "fit_stls",
]
