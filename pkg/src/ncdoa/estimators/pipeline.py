"""SPICE followed by ML refinement."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry import ArrayGeometry
from ..signals import CovarianceSet
from .grid import Grid, pick_peaks
from .mle import MleOptions, MleResult, mle_correlated, mle_uncorrelated
from .spice import SpiceOptions, SpiceProblem, SpiceResult, spice_solve

__all__ = ["init_from_spice", "estimate", "PipelineResult"]


@dataclass
class PipelineResult:
    spice: SpiceResult
    spice_doas_deg: np.ndarray
    mle: MleResult | None = None


def init_from_spice(result: SpiceResult, grid: Grid, n_sources: int,
                    data_level: float | None = None) -> MleResult:
    """MLE seed: peak angles, peak powers and the SPICE noise level.

    Powers and noise are floored at ``1e-3 * data_level`` (mean diagonal of
    the sample covariances, if given) so the search does not start in the
    flat region where the likelihood ignores them.
    """
    peaks = pick_peaks(result.powers, grid, n_sources)
    idx = np.searchsorted(grid.degrees, peaks)
    p = result.powers[idx]
    level = data_level if data_level is not None else max(p.max(), result.noise_variance)
    floor = 1e-3 * max(level, 1e-12)
    p = np.maximum(p, floor)
    s2 = max(result.noise_variance, floor)
    return MleResult(doas=np.deg2rad(peaks), powers=p, noise_variance=s2,
                     source_covariance=np.diag(p).astype(complex))


def estimate(array: ArrayGeometry, covset: CovarianceSet, grid: Grid, n_sources: int,
             mle: str | None = "mle", spice_opts: SpiceOptions | None = None,
             mle_opts: MleOptions | None = None,
             problem: SpiceProblem | None = None) -> PipelineResult:
    """Run SPICE, pick ``n_sources`` peaks and optionally refine by ML.

    Parameters
    ----------
    mle : {"mle", "mle_correlated", None}
        Which likelihood to refine with.
    """
    sp = spice_solve(array, covset, grid, spice_opts, problem=problem)
    out = PipelineResult(sp, pick_peaks(sp.powers, grid, n_sources))
    if mle is None:
        return out
    level = float(np.mean([np.trace(r).real / r.shape[0] for r in covset.matrices]))
    init = init_from_spice(sp, grid, n_sources, level)
    if mle == "mle":
        out.mle = mle_uncorrelated(array, covset, init, opts=mle_opts)
    elif mle == "mle_correlated":
        out.mle = mle_correlated(array, covset, init, opts=mle_opts)
    else:
        raise ValueError(f"unknown estimator {mle!r}")
    return out
