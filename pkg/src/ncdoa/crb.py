"""Cramer-Rao bounds on the DOAs from per-subarray covariances.

The bound is the inverse of the DOA block of the real-parameter Fisher
information after projecting out the nuisance parameters.  Each subarray
contributes ``N tr(R^-1 dR_i R^-1 dR_j)``; with ``S = sqrt(N) conj(L^-1) kron
L^-1`` (``R = L L^H``) this is ``Re((S d_i)^H (S d_j))``, so we stack the real
embeddings ``[Re S Delta; Im S Delta]`` and project with an orthonormal basis
of the nuisance columns.  This avoids inverting ``Delta_2^H Omega Delta_2``,
which is singular whenever the nuisance set is redundant.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .geometry import (ArrayGeometry, co_subarray_derivative, co_subarray_manifold,
                       direction_vector, phase_shift, steering_derivative,
                       steering_vector, vec)

__all__ = [
    "NotIdentifiableError",
    "CrbResult",
    "crb_uncorrelated",
    "crb_correlated",
    "crb_high_snr_uncorrelated",
    "crb_high_snr_correlated",
    "subarray_fims_uncorrelated",
    "subarray_fims_correlated",
    "fim_total",
    "sandwich_crb",
    "hermitian_basis",
    "RCOND_MIN",
]

RCOND_MIN = 1e-12
_NUISANCE_RTOL = 1e-10
_ZERO_COLUMN_RTOL = 1e-12


class NotIdentifiableError(np.linalg.LinAlgError):
    """The projected Fisher information is (numerically) singular."""

    def __init__(self, message, rcond=None):
        super().__init__(message)
        self.rcond = rcond


@dataclass(frozen=True)
class CrbResult:
    """Bound on the DOA covariance.

    Attributes
    ----------
    matrix : ndarray (L, L)
        Bound in radians squared.
    rcond : float
        Smallest eigenvalue of the projected information over the largest
        eigenvalue before projection.
    nuisance_rank : int
        Numerical rank of the nuisance span.
    """

    matrix: np.ndarray
    rcond: float
    nuisance_rank: int = 0

    @property
    def matrix_deg(self) -> np.ndarray:
        return self.matrix * (180.0 / np.pi) ** 2

    @property
    def rmse_bound_deg(self) -> np.ndarray:
        """Per-DOA standard deviation bound in degrees."""
        return np.rad2deg(np.sqrt(np.clip(np.diag(self.matrix), 0.0, None)))

    @property
    def summary_deg(self) -> float:
        """``sqrt(mean(diag))`` in degrees."""
        return float(np.rad2deg(np.sqrt(max(np.mean(np.diag(self.matrix)), 0.0))))


def hermitian_basis(n: int) -> list:
    """Real basis of n x n Hermitian matrices: diagonal, then Re/Im pairs for i < j."""
    basis = []
    for i in range(n):
        e = np.zeros((n, n), complex)
        e[i, i] = 1.0
        basis.append(e)
    for i in range(n):
        for j in range(i + 1, n):
            e = np.zeros((n, n), complex)
            e[i, j] = e[j, i] = 1.0
            basis.append(e)
            e = np.zeros((n, n), complex)
            e[i, j], e[j, i] = 1j, -1j
            basis.append(e)
    return basis


def _whitener(r: np.ndarray, n: float) -> np.ndarray:
    li = sla.solve_triangular(np.linalg.cholesky(r), np.eye(r.shape[0]), lower=True)
    return np.sqrt(n) * np.kron(li.conj(), li)


def _real(x: np.ndarray) -> np.ndarray:
    return np.vstack([x.real, x.imag])


def _projected_bound(x1: np.ndarray, x2: np.ndarray) -> CrbResult:
    """Bound from real whitened blocks ``x1`` (DOA) and ``x2`` (nuisance)."""
    norms = np.linalg.norm(x2, axis=0)
    # analytically vanishing columns (e.g. phases of uncorrelated sources)
    keep = norms > _ZERO_COLUMN_RTOL * norms.max(initial=0.0)
    x2 = x2[:, keep] / norms[keep]
    rank = 0
    # reference scale: the information before projection
    scale = float(np.linalg.eigvalsh(x1.T @ x1)[-1])
    if x2.shape[1]:
        u, s, _ = np.linalg.svd(x2, full_matrices=False)
        rank = int(np.sum(s > _NUISANCE_RTOL * s[0]))
        u = u[:, :rank]
        x1 = x1 - u @ (u.T @ x1)
        x1 = x1 - u @ (u.T @ x1)  # second pass for orthogonality
    j = x1.T @ x1
    ev = np.linalg.eigvalsh(j)
    # relative to the unprojected scale, so round-off residue of a fully
    # absorbed DOA block does not pass as well conditioned
    rcond = float(ev[0] / scale) if scale > 0 else 0.0
    if not rcond >= RCOND_MIN:
        raise NotIdentifiableError(
            f"projected Fisher information is singular (rcond={rcond:.3e})", rcond)
    r = np.linalg.qr(x1, mode="r")
    ri = sla.solve_triangular(r, np.eye(r.shape[0]))
    c = ri @ ri.T
    return CrbResult(0.5 * (c + c.T), rcond, rank)


def _stack(blocks):
    x1 = np.vstack([_real(b[0]) for b in blocks])
    x2 = np.vstack([_real(b[1]) for b in blocks])
    return _projected_bound(x1, x2)


def _uncorrelated_blocks(array, theta, lam, s2, n):
    theta = np.atleast_1d(np.asarray(theta, float))
    lam = np.broadcast_to(np.asarray(lam, float), theta.shape)
    out = []
    for sub in array.subarrays:
        m = sub.n_sensors
        v = steering_vector(sub, theta)
        r = (v * lam) @ v.conj().T + s2 * np.eye(m)
        d1 = co_subarray_derivative(sub, theta) * lam
        d2 = np.column_stack([co_subarray_manifold(sub, theta), vec(np.eye(m))])
        w = _whitener(r, n)
        out.append((w @ d1, w @ d2))
    return out


def crb_uncorrelated(array: ArrayGeometry, theta, lam, noise_variance: float,
                     n_snapshots: float) -> CrbResult:
    """Exact bound for uncorrelated sources.

    Nuisance parameters are the powers and the noise variance.

    Raises
    ------
    NotIdentifiableError
        If the projected information has rcond below ``RCOND_MIN``.
    """
    return _stack(_uncorrelated_blocks(array, theta, lam, noise_variance, n_snapshots))


def _correlated_blocks(array, theta, p, s2, n, with_theta_phase=True):
    theta = np.atleast_1d(np.asarray(theta, float))
    p = np.asarray(p, complex)
    L = theta.size
    basis = hermitian_basis(L)
    nu = direction_vector(theta)  # (L, 2)
    k_tot = array.n_subarrays
    out = []
    for k, sub in enumerate(array.subarrays):
        m = sub.n_sensors
        ph = phase_shift(sub.displacement, theta)
        dph = 1j * np.pi * (np.stack([np.cos(theta), -np.sin(theta)], 1) @ sub.displacement) * ph
        v, dv = steering_vector(sub, theta), steering_derivative(sub, theta)
        a = v * ph
        da = dv * ph + (v * dph if with_theta_phase else 0)
        r = a @ p @ a.conj().T + s2 * np.eye(m)

        def dr(da_mat):
            g = da_mat @ p @ a.conj().T
            return vec(g + g.conj().T)

        d1 = []
        for l in range(L):
            e = np.zeros_like(a)
            e[:, l] = da[:, l]
            d1.append(dr(e))
        d2 = [vec(a @ b @ a.conj().T) for b in basis] + [vec(np.eye(m))]
        zeta_cols = np.zeros((m * m, 2 * (k_tot - 1)), complex)
        if k > 0:
            for c in range(2):
                zeta_cols[:, 2 * (k - 1) + c] = dr(a * (1j * np.pi * nu[:, c]))
        w = _whitener(r, n)
        out.append((w @ np.column_stack(d1), w @ np.column_stack(d2 + [zeta_cols])))
    return out


def crb_correlated(array: ArrayGeometry, theta, source_cov, noise_variance: float,
                   n_snapshots: float) -> CrbResult:
    """Exact bound for a general source covariance ``P``.

    Nuisance parameters: the ``L**2`` real parameters of ``P``, the noise
    variance and the displacements of subarrays 2..K.  The bound depends on
    the displacements stored in ``array``.
    """
    return _stack(_correlated_blocks(array, theta, source_cov, noise_variance, n_snapshots))


def crb_high_snr_uncorrelated(array: ArrayGeometry, theta, n_snapshots: float) -> CrbResult:
    """Limit of :func:`crb_uncorrelated` as the SNR grows.

    Weighting uses ``(V_k V_k^H)^-T kron (V_k V_k^H)^-1``; the power and noise
    directions are still projected out.  The limit does not depend on the
    powers or the noise level.

    Raises
    ------
    NotIdentifiableError
        If some ``V_k V_k^H`` is singular (more sensors than sources in a
        subarray); the exact bound then decays to zero.
    """
    theta = np.atleast_1d(np.asarray(theta, float))
    blocks = []
    for sub in array.subarrays:
        m = sub.n_sensors
        v = steering_vector(sub, theta)
        q = v @ v.conj().T
        _check_limit_gram(q)
        d1 = co_subarray_derivative(sub, theta)
        d2 = np.column_stack([co_subarray_manifold(sub, theta), vec(np.eye(m))])
        w = _whitener(q, n_snapshots)
        blocks.append((w @ d1, w @ d2))
    return _stack(blocks)


def _check_limit_gram(q):
    ev = np.linalg.eigvalsh(q)
    rc = ev[0] / ev[-1]
    if not rc >= RCOND_MIN:
        raise NotIdentifiableError(
            f"signal Gram matrix of a subarray is singular (rcond={rc:.3e}); "
            "the bound decays to zero at high SNR", rc)


def crb_high_snr_correlated(array: ArrayGeometry, theta, upsilon, n_snapshots: float) -> CrbResult:
    """High-SNR limit for correlated sources with normalized covariance ``upsilon``.

    Raises
    ------
    NotIdentifiableError
        If ``upsilon`` or some ``A_k upsilon A_k^H`` is rank deficient, e.g.
        a coherent pair.
    """
    upsilon = np.asarray(upsilon, complex)
    ev = np.linalg.eigvalsh(upsilon)
    if not ev[0] / ev[-1] >= RCOND_MIN:
        raise NotIdentifiableError("source covariance is rank deficient; "
                                   "the bound decays to zero at high SNR", ev[0] / ev[-1])
    theta = np.atleast_1d(np.asarray(theta, float))
    for sub in array.subarrays:
        a = steering_vector(sub, theta) * phase_shift(sub.displacement, theta)
        _check_limit_gram(a @ upsilon @ a.conj().T)
    # the blocks at sigma^2 = 0 are exactly the limit ingredients
    return _stack(_correlated_blocks(array, theta, upsilon, 0.0, n_snapshots))


def subarray_fims_uncorrelated(array, theta, lam, noise_variance, n_snapshots) -> list:
    """Per-subarray FIMs over ``(theta, lambda, sigma^2)``."""
    out = []
    for d1, d2 in _uncorrelated_blocks(array, theta, lam, noise_variance, n_snapshots):
        x = _real(np.column_stack([d1, d2]))
        out.append(x.T @ x)
    return out


def subarray_fims_correlated(array, theta, source_cov, noise_variance, n_snapshots) -> list:
    """Per-subarray FIMs over ``(theta, p, sigma^2, zeta_2..zeta_K)``."""
    out = []
    for d1, d2 in _correlated_blocks(array, theta, source_cov, noise_variance, n_snapshots):
        x = _real(np.column_stack([d1, d2]))
        out.append(x.T @ x)
    return out


def fim_total(fims) -> np.ndarray:
    """Sum of per-subarray Fisher information matrices."""
    fims = list(fims)
    if not fims:
        raise ValueError("no Fisher information matrices given")
    return np.sum(fims, axis=0)


def sandwich_crb(delta1, delta2, omega) -> np.ndarray:
    """Direct evaluation ``(D1^H (O - O D2 (D2^H O D2)^-1 D2^H O) D1)^-1``.

    Reference form for well-conditioned problems; the public bounds use the
    projected formulation instead.
    """
    od2 = omega @ delta2
    a = omega - od2 @ np.linalg.solve(delta2.conj().T @ od2, od2.conj().T)
    return np.linalg.inv((delta1.conj().T @ a @ delta1).real)
