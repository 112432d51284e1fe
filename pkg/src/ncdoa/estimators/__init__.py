"""SPICE and maximum-likelihood estimators."""
from .grid import Grid, local_maxima, pick_peaks
from .mle import (MleOptions, MleResult, fold_doas, mle_correlated, mle_uncorrelated,
                  nll_correlated, nll_correlated_grad, nll_uncorrelated, nll_uncorrelated_grad,
                  separate_duplicates)
from .pipeline import init_from_spice, estimate
from .spice import SpiceOptions, SpiceProblem, SpiceResult, spice_solve, spice_weights

__all__ = [
    "Grid", "local_maxima", "pick_peaks",
    "MleOptions", "MleResult", "fold_doas", "mle_correlated", "mle_uncorrelated",
    "nll_correlated", "nll_correlated_grad", "nll_uncorrelated", "nll_uncorrelated_grad",
    "separate_duplicates", "init_from_spice", "estimate",
    "SpiceOptions", "SpiceProblem", "SpiceResult", "spice_solve", "spice_weights",
]
