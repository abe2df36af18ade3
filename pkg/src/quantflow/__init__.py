"""Optimal quantization of densities and its gradient flows in 1D and on the hexagonal torus."""

from .density import Density1D, DiscreteMeasure1D, power_normalize, wasserstein_1d
from .discrete1d import PointConfig1D, energy, equispaced, evolve, gradient
from .errors import InputError, NumericalError, QuantflowError

__all__ = [
    "Density1D",
    "DiscreteMeasure1D",
    "InputError",
    "NumericalError",
    "PointConfig1D",
    "QuantflowError",
    "energy",
    "equispaced",
    "evolve",
    "gradient",
    "power_normalize",
    "wasserstein_1d",
]

__version__ = "0.1.0"
