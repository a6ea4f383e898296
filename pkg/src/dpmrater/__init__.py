"""Rater-effect models with a Dirichlet-process-mixture prior and the lambda
polarization index."""

from .baseline import BaselinePosterior, NormalHlmPriors, fit_normal_hlm, icc
from .data import DesignBundle, RatingsError, RatingsTable, build_design, load_ratings
from .dpm import stick_break, sample_truncated_dpm
from .gibbs import ChainConfig, DpmHyperparams, PosteriorDraws, run_chain
from .polarization import (GridSpec, GridDensity, density_lambda, find_extrema, hpd_interval, lambda_index,
                           mixture_density_on_grid)

__version__ = "0.1.0"

__all__ = [
    "BaselinePosterior",
    "NormalHlmPriors",
    "fit_normal_hlm",
    "icc",
    "DesignBundle",
    "RatingsError",
    "RatingsTable",
    "build_design",
    "load_ratings",
    "stick_break",
    "sample_truncated_dpm",
    "ChainConfig",
    "DpmHyperparams",
    "PosteriorDraws",
    "run_chain",
    "GridSpec",
    "GridDensity",
    "density_lambda",
    "find_extrema",
    "hpd_interval",
    "lambda_index",
    "mixture_density_on_grid",
]
