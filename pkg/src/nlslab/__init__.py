"""nlslab: pseudospectral laboratory for the mass-critical focusing NLS."""

__version__ = "0.1.0"

from .spectral_core import (  # noqa: F401
    PHYSICAL,
    SPECTRAL,
    ComplexField,
    ConservedSet,
    Grid,
    MultiplierSpec,
    SolverError,
    apply_galilean_boost,
    apply_smoothing,
    conserved_quantities,
    dilate_field,
    dyadic_ladder,
    forward_transform,
    fractional_derivative,
    gradient_deficit,
    gradient_norm,
    inner_l2,
    inverse_transform,
    littlewood_paley,
    load_field,
    modified_energy,
    modified_momentum,
    random_smooth_field,
    save_field,
    scale_field,
    smoothing_multiplier,
    sobolev_norm,
)
