"""Exponential ergodicity rate bounds.

Closed-form bounds on the strong-ergodicity rate ``kappa`` and the
spectral gap ``lambda_1`` for birth-death, single-death and tree chains,
one-dimensional diffusions, stable-driven SDEs and time-changed stable
processes, together with independent numerical oracles and Monte Carlo
estimators to check them against.
"""

__version__ = "0.1.0"

from .chain_bounds import (
    NotStronglyErgodic,
    RateBounds,
    bd_rate_bounds,
    combine_bounds,
    mc1_bound,
    sd_rate_bounds,
    tree_bounds,
)
from .continuum_bounds import diff_rate_bounds, quartic_example, stable_bounds, tc_rate_bound
from .model import (
    BirthDeathSpec,
    DiffusionSpec,
    ModelError,
    SingleDeathSpec,
    StableSdeSpec,
    TimeChangedStableSpec,
    TreeSpec,
    load_model,
    parse_model,
)
from .montecarlo import RngConfig, em_diffusion_hitting, mc_hitting
from .numerics import Tolerance
from .oracle import hitting_moments, kappa_empirical, spectral_gap, truncate_generator, tv_decay

__all__ = [
    "__version__",
    "BirthDeathSpec",
    "SingleDeathSpec",
    "TreeSpec",
    "DiffusionSpec",
    "StableSdeSpec",
    "TimeChangedStableSpec",
    "ModelError",
    "load_model",
    "parse_model",
    "Tolerance",
    "RateBounds",
    "NotStronglyErgodic",
    "bd_rate_bounds",
    "sd_rate_bounds",
    "tree_bounds",
    "mc1_bound",
    "combine_bounds",
    "diff_rate_bounds",
    "quartic_example",
    "stable_bounds",
    "tc_rate_bound",
    "truncate_generator",
    "spectral_gap",
    "hitting_moments",
    "tv_decay",
    "kappa_empirical",
    "RngConfig",
    "mc_hitting",
    "em_diffusion_hitting",
]
