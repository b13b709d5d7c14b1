"""Exact desk-scale laboratory for score-based discrete diffusion."""

from .state import Alphabet, DensePmf, StateSpace, normalize, point_mass, uniform_pmf
from .forward import (
    NoiseKind,
    TokenKernel,
    alpha,
    forward_token_kernel,
    masking_prior,
    propagate_forward,
    sample_forward_path,
    uniformize_forward,
)

__all__ = [
    "Alphabet",
    "DensePmf",
    "StateSpace",
    "NoiseKind",
    "TokenKernel",
    "alpha",
    "forward_token_kernel",
    "masking_prior",
    "normalize",
    "point_mass",
    "propagate_forward",
    "sample_forward_path",
    "uniform_pmf",
    "uniformize_forward",
]

__version__ = "0.1.0"
