"""Spectral gaps of stochastic exchange models on weighted graphs.

Builds exact k-particle generators from kernel moments, computes their
spectra, checks the kinetic-factor bounds against them and simulates the
mass and hidden-parameter dynamics.
"""

__version__ = "0.1.0"

from .errors import ExgapError  # noqa: E402
from .kernels import INFINITE, MomentOracle, aldous_criterion, gamma, gamma_closed_form  # noqa: E402
from .model import HP, IEM, KMP, Discrete, ModelSpec, load_model, make_spec, validate  # noqa: E402
from .spectral import gap_rw, spectrum, verify_bounds  # noqa: E402

__all__ = [
    "ExgapError", "INFINITE", "MomentOracle", "aldous_criterion", "gamma",
    "gamma_closed_form", "HP", "IEM", "KMP", "Discrete", "ModelSpec", "load_model",
    "make_spec", "validate", "gap_rw", "spectrum", "verify_bounds",
]
