"""Direction grids and spectrum peak selection."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["Grid", "pick_peaks", "local_maxima"]


@dataclass(frozen=True)
class Grid:
    """Strictly increasing angles in degrees."""

    degrees: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.degrees, dtype=float).ravel()
        if d.size < 1:
            raise ValueError("empty grid")
        if np.any(np.diff(d) <= 0):
            raise ValueError("grid must be strictly increasing")
        d.flags.writeable = False
        object.__setattr__(self, "degrees", d)

    @classmethod
    def uniform(cls, step: float = 0.1, fov=(-90.0, 90.0)):
        """Points ``lo + i*step`` strictly inside the open interval ``fov``.

        >>> Grid.uniform().size
        1799
        """
        lo, hi = map(float, fov)
        if not (step > 0 and hi > lo):
            raise ValueError("need step > 0 and a non-empty field of view")
        n = int(np.floor((hi - lo) / step + 1e-9))
        pts = lo + step * np.arange(1, n + 1)
        pts = np.round(pts, 12)
        return cls(pts[(pts > lo) & (pts < hi)])

    @property
    def size(self) -> int:
        return self.degrees.size

    @property
    def radians(self) -> np.ndarray:
        return np.deg2rad(self.degrees)


def local_maxima(p: np.ndarray) -> np.ndarray:
    """Indices of local maxima; a flat plateau reports its leftmost index.

    A plateau counts when both neighbours (where present) are strictly lower.
    """
    p = np.asarray(p, dtype=float)
    # run-length encode equal values, then compare neighbouring runs
    starts = np.flatnonzero(np.r_[True, p[1:] != p[:-1]])
    vals = p[starts]
    left_ok = np.r_[True, vals[:-1] < vals[1:]]
    right_ok = np.r_[vals[1:] < vals[:-1], True]
    return starts[left_ok & right_ok]


def pick_peaks(p: np.ndarray, grid: Grid, n_peaks: int) -> np.ndarray:
    """Angles (degrees, ascending) of the ``n_peaks`` highest local maxima.

    Ties in height break towards the lower index.  If there are fewer local
    maxima than requested, the largest remaining entries fill the gap.
    """
    if n_peaks < 1:
        raise ValueError("n_peaks must be >= 1")
    p = np.asarray(p, dtype=float)
    if p.size != grid.size:
        raise ValueError("spectrum and grid sizes differ")
    if n_peaks > p.size:
        raise ValueError("more peaks requested than grid points")
    cand = local_maxima(p)
    cand = cand[np.lexsort((cand, -p[cand]))][:n_peaks]
    if cand.size < n_peaks:
        rest = np.setdiff1d(np.arange(p.size), cand)
        rest = rest[np.lexsort((rest, -p[rest]))]
        cand = np.r_[cand, rest[:n_peaks - cand.size]]
    return np.sort(grid.degrees[cand])
