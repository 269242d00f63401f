"""Sparse reconstruction of 3D radial-mixture densities from 2D projections
taken at unknown orientations."""

from .errors import ConfigError, DataError, NumericalError, SparseTomoError
from .geometry import factor_gram, gram, sample_haar_rotation
from .mixture import RadialMixture2, RadialMixture3, pyramid_fixture
from .imaging import PixelGrid, Profile, simulate_stack
from .sparse_solver import lars_lasso_path, solve_at
from .reconstruction import shape_distance

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DataError",
    "NumericalError",
    "PixelGrid",
    "Profile",
    "RadialMixture2",
    "RadialMixture3",
    "SparseTomoError",
    "factor_gram",
    "gram",
    "lars_lasso_path",
    "pyramid_fixture",
    "sample_haar_rotation",
    "shape_distance",
    "simulate_stack",
    "solve_at",
]
