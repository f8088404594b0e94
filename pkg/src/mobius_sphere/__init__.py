"""Möbius-equivariant convolution of spherical signals."""

from .filter_xform import QuadratureScheme, optimize_quadrature, transform_filter
from .identity_conv import DeltaTable, identity_convolve, precompute_delta
from .layers import FRNorm, MCResNetBlock, MobiusConv, ThresholdedMish, mobius_convolve
from .logpolar import LogPolarFilter
from .mobius import LowerTriangular, MobiusTransform, sample_transform
from .operators import density_operator, frame_operator, frames_and_density
from .sht import grid_spec, sht_forward, sht_inverse
from .tables import load_tables, precompute

__all__ = [
    "DeltaTable",
    "FRNorm",
    "LogPolarFilter",
    "LowerTriangular",
    "MCResNetBlock",
    "MobiusConv",
    "MobiusTransform",
    "QuadratureScheme",
    "ThresholdedMish",
    "density_operator",
    "frame_operator",
    "frames_and_density",
    "grid_spec",
    "identity_convolve",
    "load_tables",
    "mobius_convolve",
    "optimize_quadrature",
    "precompute",
    "precompute_delta",
    "sample_transform",
    "sht_forward",
    "sht_inverse",
    "transform_filter",
]
