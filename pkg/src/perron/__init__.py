"""Perron eigentriplets and exponential ergodicity certificates for
nonconservative positive semigroups on weighted measure spaces."""

from .grids import (DiscreteMeasure, Grid1D, GridFunction, GridMismatchError,
                    TimeMeasure, Weight, pair, weighted_function_norm,
                    weighted_measure_norm)
from .models import (ConstantPotential, DiracPairKernel, ModelSpec,
                     QuadraticPotential, TabulatedConvolutionKernel,
                     TabulatedPotential, TruncatedGaussianKernel,
                     UniformBandKernel)
from .pde import PDESemigroup

__version__ = "0.1.0"

__all__ = [
    "DiscreteMeasure", "Grid1D", "GridFunction", "GridMismatchError",
    "TimeMeasure", "Weight", "pair", "weighted_function_norm",
    "weighted_measure_norm", "ConstantPotential", "DiracPairKernel",
    "ModelSpec", "QuadraticPotential", "TabulatedConvolutionKernel",
    "TabulatedPotential", "TruncatedGaussianKernel", "UniformBandKernel",
    "PDESemigroup", "__version__",
]
