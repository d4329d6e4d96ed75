"""Fixed-grid least-squares estimation of random-coefficient distributions in the Mixed Logit model."""

__version__ = "0.1.0"

from .estimator import FitResult, build_design, cdf_at, fit_fixed_grid, fit_pcr, marginal_quantile
from .grid import Grid, GridSpec, halton_grid
from .kernels import ChoiceDataset, GaussianMixtureDGP, logit_choice_prob, simulate_dataset
from .solver import SimplexLsProblem, solve

__all__ = [
    "ChoiceDataset",
    "FitResult",
    "GaussianMixtureDGP",
    "Grid",
    "GridSpec",
    "SimplexLsProblem",
    "build_design",
    "cdf_at",
    "fit_fixed_grid",
    "fit_pcr",
    "halton_grid",
    "logit_choice_prob",
    "marginal_quantile",
    "simulate_dataset",
    "solve",
]
