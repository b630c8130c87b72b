"""Spherical needlet analysis of isotropic Gaussian random fields."""

__version__ = "0.1.0"

from .errors import (
    AssumptionViolation,
    ConsistencyError,
    DegenerateSpectrumError,
    InvalidArgument,
    NeedletError,
    PreconditionError,
    ResourceLimitError,
)
from .filter_bank import FilterProfile, build_bump_table, build_profile, eval_b, window_weights
from .sphere_geom import CubatureGrid, SpherePoint, build_grid, geodesic_distance, grid_for_scale
from .harmonics import HarmonicCoefficients, analyze, legendre_kernel, synthesize, ylm
from .random_field import PowerSpectrum, cmb_like_spectrum, power_law_spectrum, sample_alm, simulate_field
from .needlet_transform import NeedletCoefficients, coeff_variance, correlation_function, needlet_coeffs
from .statistics import HermiteWeights, StatisticsReport, gof_presets, gof_test, h_statistics, omega_matrix
from .masking import SkyMask, discrepancy, masked_coeffs, run_mask_experiment

__all__ = [
    "AssumptionViolation",
    "ConsistencyError",
    "CubatureGrid",
    "DegenerateSpectrumError",
    "FilterProfile",
    "HarmonicCoefficients",
    "HermiteWeights",
    "InvalidArgument",
    "NeedletCoefficients",
    "NeedletError",
    "PowerSpectrum",
    "PreconditionError",
    "ResourceLimitError",
    "SkyMask",
    "SpherePoint",
    "StatisticsReport",
    "analyze",
    "build_bump_table",
    "build_grid",
    "build_profile",
    "cmb_like_spectrum",
    "coeff_variance",
    "correlation_function",
    "discrepancy",
    "eval_b",
    "geodesic_distance",
    "gof_presets",
    "gof_test",
    "grid_for_scale",
    "h_statistics",
    "legendre_kernel",
    "masked_coeffs",
    "needlet_coeffs",
    "omega_matrix",
    "power_law_spectrum",
    "run_mask_experiment",
    "sample_alm",
    "simulate_field",
    "synthesize",
    "window_weights",
    "ylm",
]
