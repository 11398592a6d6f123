"""Spectral toolkit for scale-regularized free fields on the torus.

Layer map: spectral/symbols (grid, transforms, multiplier symbols), besov
(Littlewood-Paley blocks and paraproducts), paths (scale-indexed Gaussian
paths and Girsanov pairings), wick (Hermite renormalized powers and the
quartic energy), drift (the path-dependent drift equation and its reweighted
measure), variational (stochastic-control objective and optimizer),
singularity (smoothed quartic statistics and scaling scans), experiments/cli
(reproducible experiment drivers).
"""

__version__ = "0.1.0"

from .spectral import (TorusGrid, SpectralField, GridError, forward_transform,
                       inverse_transform, multiply_fields, apply_multiplier)
from .symbols import (SymbolParams, DEFAULT_PARAMS, DomainError, eval_rho,
                      eval_sigma_sq, eval_theta)

__all__ = [
    "TorusGrid", "SpectralField", "GridError", "forward_transform",
    "inverse_transform", "multiply_fields", "apply_multiplier",
    "SymbolParams", "DEFAULT_PARAMS", "DomainError", "eval_rho",
    "eval_sigma_sq", "eval_theta", "__version__",
]
