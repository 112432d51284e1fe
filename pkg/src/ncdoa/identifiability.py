"""Covariance lags and generic Kruskal rank of the co-array manifold."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import ArrayGeometry, SubarrayGeometry, co_array_manifold

__all__ = [
    "LagSet",
    "covariance_lags",
    "lag_union",
    "corollary_bound",
    "random_separated_doas",
    "numeric_kruskal_rank",
    "max_identifiable",
    "check_unique_identifiability",
    "LAG_TOL",
]

LAG_TOL = 1e-9


@dataclass(frozen=True)
class LagSet:
    """Distinct 2-D lags, sorted lexicographically, shape ``(n, 2)``."""

    lags: np.ndarray

    def __len__(self):
        return self.lags.shape[0]

    def __contains__(self, b):
        b = np.asarray(b, dtype=float)
        return bool(np.any(np.all(np.abs(self.lags - b) <= LAG_TOL, axis=1)))

    @classmethod
    def from_points(cls, pts):
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        keys = np.round(pts / LAG_TOL).astype(np.int64)
        _, idx = np.unique(keys, axis=0, return_index=True)
        uniq = pts[np.sort(idx)]
        order = np.lexsort((uniq[:, 1], uniq[:, 0]))
        return cls(uniq[order])


def covariance_lags(geom: SubarrayGeometry) -> LagSet:
    """All differences ``z_j - z_i`` inside one subarray.

    Examples
    --------
    >>> len(covariance_lags(SubarrayGeometry([[0, 0], [1, 0]])))
    3
    """
    p = geom.relative_positions
    return LagSet.from_points((p[None, :, :] - p[:, None, :]).reshape(-1, 2))


def lag_union(array: ArrayGeometry) -> LagSet:
    return LagSet.from_points(np.vstack([covariance_lags(s).lags for s in array.subarrays]))


def corollary_bound(array: ArrayGeometry) -> int:
    """``floor(card(B) / 2)``."""
    return len(lag_union(array)) // 2


def random_separated_doas(rng, m: int, min_sep_deg: float = 0.5,
                          fov_deg=(-90.0, 90.0)) -> np.ndarray:
    """Uniform sorted m-tuple in the open field of view with minimum spacing.

    Draws from the uniform law on the admissible set by shrinking the
    interval by ``(m - 1) * min_sep`` and re-expanding sorted draws.
    Returned in radians.
    """
    lo, hi = fov_deg
    span = hi - lo - (m - 1) * min_sep_deg
    if span <= 0:
        raise ValueError(f"cannot place {m} directions {min_sep_deg} deg apart")
    u = np.sort(rng.uniform(0.0, span, size=m))
    deg = lo + u + min_sep_deg * np.arange(m)
    # open interval: an endpoint draw has probability zero but guard anyway
    deg = np.clip(deg, np.nextafter(lo, hi), np.nextafter(hi, lo))
    return np.deg2rad(deg)


def numeric_kruskal_rank(array: ArrayGeometry, trials: int = 200, tol: float = 1e-8,
                         seed: int = 0, min_sep_deg: float = 0.5) -> int:
    """Generic Kruskal-rank estimate of the co-array manifold.

    Candidate rank ``m`` passes if, for ``trials`` random separated m-tuples,
    the manifold columns have ``s_min > tol * s_max``. The result is the
    largest ``m`` reached by consecutive passes; a probabilistic estimate,
    not a certificate.
    """
    if trials < 1 or not 0 < tol < 1:
        raise ValueError("need trials >= 1 and 0 < tol < 1")
    rng = np.random.default_rng(seed)
    cap = min(array.coarray_size, len(lag_union(array)))
    rho = 0
    for m in range(1, cap + 1):
        for _ in range(trials):
            s = np.linalg.svd(co_array_manifold(array, random_separated_doas(rng, m, min_sep_deg)),
                              compute_uv=False)
            if s[-1] <= tol * s[0]:
                return rho
        rho = m
    return rho


def max_identifiable(array: ArrayGeometry, **kwargs) -> int:
    """``floor(rho / 2)`` with ``rho`` from :func:`numeric_kruskal_rank`."""
    return numeric_kruskal_rank(array, **kwargs) // 2


def _equivalent(theta, theta2, atol=1e-12) -> bool:
    a, b = np.sort(np.atleast_1d(theta)), np.sort(np.atleast_1d(theta2))
    return a.shape == b.shape and bool(np.all(np.abs(a - b) <= atol))


def check_unique_identifiability(array: ArrayGeometry, theta, lam, theta2, lam2,
                                 tol: float = 1e-8):
    """Whether two (DOA, power) hypotheses give different co-array data.

    Returns
    -------
    bool or None
        ``None`` when the DOA sets coincide up to ordering (the hypotheses
        are not comparable); otherwise ``True`` iff
        ``||V(theta) lam - V(theta2) lam2|| > tol``.
    """
    lam, lam2 = np.atleast_1d(lam).astype(float), np.atleast_1d(lam2).astype(float)
    if np.any(lam <= 0) or np.any(lam2 <= 0):
        raise ValueError("powers must be positive")
    if _equivalent(theta, theta2):
        return None
    r1 = co_array_manifold(array, theta) @ lam
    r2 = co_array_manifold(array, theta2) @ lam2
    return bool(np.linalg.norm(r1 - r2) > tol)
