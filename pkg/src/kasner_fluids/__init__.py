"""Fuchsian solvers for relativistic fluids near Kasner singularities."""

__version__ = "0.1.0"

from .kasner_geometry import KasnerBackground, coordinate_transform, exponents_from_K, normalize_K
from .fluid_params import FluidParameters, derived_exponents, gammas, stability_classify

__all__ = [
    "__version__",
    "KasnerBackground",
    "FluidParameters",
    "coordinate_transform",
    "exponents_from_K",
    "normalize_K",
    "derived_exponents",
    "gammas",
    "stability_classify",
]
