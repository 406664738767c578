"""Non-linear latent variable density model: approximation checks, prior,
posterior sampler and contraction benchmark."""

from .numerics import Density, Grid, GridFunction, KernelSpec, NumericsError, TransferFunction
from .truths import catalog, get_truth

__version__ = "0.1.0"

__all__ = [
    "Density",
    "Grid",
    "GridFunction",
    "KernelSpec",
    "NumericsError",
    "TransferFunction",
    "catalog",
    "get_truth",
]
