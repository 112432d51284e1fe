"""Maximum-likelihood DOA estimation from per-subarray covariances.

The negative log-likelihood of independent Wishart sample covariances is
``N sum_k (log det R_k + tr(R_k^-1 Rhat_k))`` up to constants.  Optimization
runs on a smooth unconstrained parameterization: log powers and log noise,
``P = C C^H`` with ``C`` lower triangular (L**2 reals) for correlated
sources, and the phase angles of ``Phi_k`` for k >= 2 (``Phi_1 = I``).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from ..geometry import ArrayGeometry, steering_derivative, steering_vector
from ..signals import CovarianceSet

__all__ = [
    "MleOptions",
    "MleResult",
    "nll_uncorrelated",
    "nll_correlated",
    "nll_uncorrelated_grad",
    "nll_correlated_grad",
    "mle_uncorrelated",
    "mle_correlated",
    "fold_doas",
    "separate_duplicates",
]


@dataclass(frozen=True)
class MleOptions:
    """Quasi-Newton settings.

    ``gtol`` bounds the projected gradient of the per-snapshot objective at
    which a run counts as converged.
    """

    max_iter: int = 2000
    gtol: float = 1e-5


@dataclass
class MleResult:
    """ML estimate.

    ``doas`` are radians; ``nll`` includes the factor N.  ``phases`` is a
    ``(K, L)`` array of unit-modulus diagonals of ``Phi_k`` (correlated
    model only).
    """

    doas: np.ndarray
    powers: np.ndarray
    noise_variance: float
    source_covariance: np.ndarray | None = None
    phases: np.ndarray | None = None
    nll: float = np.nan
    nll_init: float = np.nan
    iterations: int = 0
    converged: bool = False
    message: str = ""

    @property
    def doas_deg(self) -> np.ndarray:
        return np.rad2deg(self.doas)

    @property
    def n_sources(self) -> int:
        return self.doas.size


def _n_of(covset, n):
    if n is not None:
        return n
    return covset.n_snapshots if covset.n_snapshots is not None else 1


def _model_cov(sub, theta, p, s2, alpha=0.0):
    a = steering_vector(sub, theta) * np.exp(1j * np.asarray(alpha))
    return a @ p @ a.conj().T + s2 * np.eye(sub.n_sensors)


def _core(array, mats, theta, p, s2, alpha):
    """Per-snapshot objective and its partial derivatives.

    Returns ``f, d_theta, Gamma_sum, d_s2, d_alpha`` where ``Gamma_sum`` is
    ``sum_k A_k^H G_k A_k`` (gradient w.r.t. a Hermitian ``P``).
    """
    L = theta.size
    f = 0.0
    d_theta = np.zeros(L)
    gam = np.zeros((L, L), complex)
    d_s2 = 0.0
    d_alpha = np.zeros((len(mats), L))
    for k, (sub, rh) in enumerate(zip(array.subarrays, mats)):
        ph = np.exp(1j * alpha[k])
        a = steering_vector(sub, theta) * ph
        da = steering_derivative(sub, theta) * ph
        r = a @ p @ a.conj().T + s2 * np.eye(sub.n_sensors)
        c = np.linalg.cholesky(r)
        ri = np.linalg.inv(r)
        rir = ri @ rh
        f += 2 * np.log(np.diag(c).real).sum() + np.trace(rir).real
        g = ri - rir @ ri
        pag = p @ a.conj().T @ g  # L x M
        d_theta += 2 * np.real(np.einsum("li,il->l", pag, da))
        d_alpha[k] = 2 * np.real(1j * np.einsum("li,il->l", pag, a))
        gam += a.conj().T @ g @ a
        d_s2 += np.trace(g).real
    return f, d_theta, gam, d_s2, d_alpha


def nll_uncorrelated(array: ArrayGeometry, theta, lam, noise_variance, covset: CovarianceSet,
                     n_snapshots=None) -> float:
    """``N sum_k (log det R_k + tr(R_k^-1 Rhat_k))`` with ``R_k = V diag(lam) V^H + s2 I``."""
    theta = np.atleast_1d(np.asarray(theta, float))
    p = np.diag(np.broadcast_to(np.asarray(lam, float), theta.shape)).astype(complex)
    alpha = np.zeros((len(covset), theta.size))
    f = _core(array, covset.matrices, theta, p, noise_variance, alpha)[0]
    return _n_of(covset, n_snapshots) * f


def nll_uncorrelated_grad(array, theta, lam, noise_variance, covset, n_snapshots=None):
    """Gradient of :func:`nll_uncorrelated` w.r.t. ``(theta, lam, sigma^2)``."""
    theta = np.atleast_1d(np.asarray(theta, float))
    p = np.diag(np.broadcast_to(np.asarray(lam, float), theta.shape)).astype(complex)
    alpha = np.zeros((len(covset), theta.size))
    _, dth, gam, ds2, _ = _core(array, covset.matrices, theta, p, noise_variance, alpha)
    n = _n_of(covset, n_snapshots)
    return n * dth, n * np.diag(gam).real.copy(), n * ds2


def _alpha_full(phases, k, L):
    if phases is None:
        return np.zeros((k, L))
    return np.angle(np.asarray(phases, complex).reshape(k, L))


def nll_correlated(array: ArrayGeometry, theta, source_cov, noise_variance, phases,
                   covset: CovarianceSet, n_snapshots=None) -> float:
    """Likelihood with ``R_k = V_k Phi_k P Phi_k^H V_k^H + s2 I``.

    ``phases`` is ``(K, L)`` unit-modulus (row 0 is ignored and taken as 1)
    or None for all ones.
    """
    theta = np.atleast_1d(np.asarray(theta, float))
    alpha = _alpha_full(phases, len(covset), theta.size)
    alpha[0] = 0.0
    f = _core(array, covset.matrices, theta, np.asarray(source_cov, complex),
              noise_variance, alpha)[0]
    return _n_of(covset, n_snapshots) * f


def nll_correlated_grad(array, theta, source_cov, noise_variance, phases, covset,
                        n_snapshots=None):
    """Gradient w.r.t. ``theta``, Hermitian ``P`` (as ``sum A^H G A``), ``sigma^2``
    and the phase angles of subarrays 2..K."""
    theta = np.atleast_1d(np.asarray(theta, float))
    alpha = _alpha_full(phases, len(covset), theta.size)
    alpha[0] = 0.0
    _, dth, gam, ds2, dal = _core(array, covset.matrices, theta,
                                  np.asarray(source_cov, complex), noise_variance, alpha)
    n = _n_of(covset, n_snapshots)
    return n * dth, n * gam, n * ds2, n * dal[1:]


def fold_doas(theta, array: ArrayGeometry) -> np.ndarray:
    """Map angles to a canonical branch.

    Arrays with all offsets on the x axis only see ``sin(theta)``, so fold
    into [-90, 90] degrees; otherwise wrap into (-180, 180].
    """
    theta = np.asarray(theta, float)
    if array.is_linear_x:
        return np.arcsin(np.clip(np.sin(theta), -1.0, 1.0))
    return -np.angle(np.exp(-1j * theta))


def separate_duplicates(theta_deg, step_deg: float = 0.01) -> np.ndarray:
    """Shift repeated angles by ``+step`` per earlier duplicate."""
    out = np.array(theta_deg, dtype=float)
    for i in range(out.size):
        while np.any(out[:i] == out[i]):
            out[i] += step_deg
    return out


def _log_bounds(covset, n_log):
    """Box for log-scale parameters relative to the data level.

    Keeps line searches away from overflow and from numerically singular
    model covariances; the box is wide enough never to bind at a sensible
    optimum.
    """
    scale = np.mean([np.trace(r).real / r.shape[0] for r in covset.matrices])
    scale = scale if scale > 0 else 1.0
    lo, hi = np.log(scale) - 25.0, np.log(scale) + 10.0
    return [(lo, hi)] * n_log


def _fisher_scale(model, x0, h=1e-6):
    """``1/sqrt`` of the per-snapshot Fisher diagonal at ``x0``.

    ``model(x)`` returns the model covariances; their derivatives are taken
    by central differences.  Optimizing in ``x / scale`` makes a unit step
    about one standard deviation in every coordinate, so the first
    quasi-Newton steps stay in the starting basin.
    """
    rs = model(x0)
    ris = [np.linalg.inv(r) for r in rs]
    fd = np.zeros(x0.size)
    for i in range(x0.size):
        e = np.zeros(x0.size)
        e[i] = h
        for ri, rp, rm in zip(ris, model(x0 + e), model(x0 - e)):
            w = ri @ ((rp - rm) / (2 * h))
            fd[i] += np.einsum("ij,ji->", w, w).real
    # coordinates the model ignores at x0 (e.g. phases while P is diagonal)
    # keep their natural unit
    live = fd > 1e-8 * fd.max()
    return np.where(live, 1.0 / np.sqrt(np.where(live, fd, 1.0)), 1.0)


def _minimize(fun, x0, bounds, opts, scale=None):
    d = np.ones_like(x0) if scale is None else scale

    def safe(x):
        try:
            f, g = fun(x)
        except np.linalg.LinAlgError:
            return np.inf, np.zeros_like(x)
        if not (np.isfinite(f) and np.all(np.isfinite(g))):
            return np.inf, np.zeros_like(x)
        return f, g

    def scaled(y):
        f, g = safe(y * d)
        return f, g * d

    f0 = safe(x0)[0]
    lo = np.array([b[0] if b[0] is not None else -np.inf for b in bounds])
    hi = np.array([b[1] if b[1] is not None else np.inf for b in bounds])
    x0 = np.clip(x0, lo, hi)
    res = minimize(scaled, x0 / d, jac=True, method="L-BFGS-B",
                   bounds=list(zip(lo / d, hi / d)),
                   options=dict(maxiter=opts.max_iter, ftol=1e-15, gtol=1e-12, maxcor=20))
    x, f = np.clip(res.x * d, lo, hi), res.fun
    if not np.isfinite(f) or f > f0:
        x, f = x0, f0
    g = safe(x)[1]
    pg = np.where((x <= lo) & (g > 0) | (x >= hi) & (g < 0), 0.0, g)
    ok = bool(res.success or np.abs(pg).max() <= opts.gtol)
    return x, f, f0, ok, res


def mle_uncorrelated(array: ArrayGeometry, covset: CovarianceSet, init: MleResult,
                     n_snapshots=None, opts: MleOptions | None = None) -> MleResult:
    """Local ML estimate for uncorrelated sources starting at ``init``.

    Non-convergence is reported in ``converged``; the returned objective is
    never above the initial one.
    """
    opts = opts or MleOptions()
    n = _n_of(covset, n_snapshots)
    L = init.doas.size
    th0 = np.deg2rad(separate_duplicates(np.rad2deg(init.doas)))
    x0 = np.r_[th0, np.log(np.asarray(init.powers, float)), np.log(init.noise_variance)]
    mats = covset.matrices
    alpha = np.zeros((len(mats), L))

    def fun(x):
        th, lam, s2 = x[:L], np.exp(x[L:2 * L]), np.exp(x[-1])
        f, dth, gam, ds2, _ = _core(array, mats, th, np.diag(lam).astype(complex), s2, alpha)
        return f, np.r_[dth, np.diag(gam).real * lam, ds2 * s2]

    def model(x):
        p = np.diag(np.exp(x[L:2 * L]))
        return [_model_cov(sub, x[:L], p, np.exp(x[-1])) for sub in array.subarrays]

    bounds = [(None, None)] * L + _log_bounds(covset, L + 1)
    x, f, f0, ok, res = _minimize(fun, x0, bounds, opts, _fisher_scale(model, x0))
    th, lam, s2 = x[:L], np.exp(x[L:2 * L]), float(np.exp(x[-1]))
    folded = fold_doas(th, array)
    order = np.argsort(folded)
    return MleResult(doas=folded[order], powers=lam[order], noise_variance=s2,
                     source_covariance=np.diag(lam[order]).astype(complex),
                     nll=n * f, nll_init=n * f0, iterations=int(res.nit),
                     converged=ok, message=str(res.message))


def _tril_pack(c):
    L = c.shape[0]
    il = np.tril_indices(L, -1)
    return np.r_[np.diag(c).real, c[il].real, c[il].imag]


def _tril_unpack(v, L):
    c = np.diag(v[:L]).astype(complex)
    il = np.tril_indices(L, -1)
    m = il[0].size
    c[il] = v[L:L + m] + 1j * v[L + m:L + 2 * m]
    return c


def mle_correlated(array: ArrayGeometry, covset: CovarianceSet, init: MleResult,
                   n_snapshots=None, opts: MleOptions | None = None) -> MleResult:
    """Local ML estimate for correlated sources.

    Unknowns: DOAs, ``P = C C^H`` (psd by construction), noise variance and
    the phases of subarrays 2..K.  ``init.source_covariance`` (or a diagonal
    built from ``init.powers``) and ``init.phases`` (default ones) seed the
    search.
    """
    opts = opts or MleOptions()
    n = _n_of(covset, n_snapshots)
    L, K = init.doas.size, len(covset)
    th0 = np.deg2rad(separate_duplicates(np.rad2deg(init.doas)))
    p0 = init.source_covariance if init.source_covariance is not None \
        else np.diag(np.asarray(init.powers, float))
    p0 = np.asarray(p0, complex)
    c0 = np.linalg.cholesky(p0 + 1e-12 * np.trace(p0).real * np.eye(L))
    al0 = _alpha_full(init.phases, K, L)[1:]
    x0 = np.r_[th0, _tril_pack(c0), np.log(init.noise_variance), al0.ravel()]
    mats = covset.matrices
    il = np.tril_indices(L, -1)
    nc = L * L

    def unpack(x):
        c = _tril_unpack(x[L:L + nc], L)
        al = np.vstack([np.zeros(L), x[L + nc + 1:].reshape(K - 1, L)])
        return x[:L], c, np.exp(x[L + nc]), al

    def fun(x):
        th, c, s2, al = unpack(x)
        f, dth, gam, ds2, dal = _core(array, mats, th, c @ c.conj().T, s2, al)
        z = gam @ c
        dc = np.r_[2 * np.diag(z).real, 2 * z[il].real, 2 * z[il].imag]
        return f, np.r_[dth, dc, ds2 * s2, dal[1:].ravel()]

    def model(x):
        th, c, s2, al = unpack(x)
        return [_model_cov(sub, th, c @ c.conj().T, s2, a)
                for sub, a in zip(array.subarrays, al)]

    bounds = ([(None, None)] * (L + nc) + _log_bounds(covset, 1)
              + [(None, None)] * ((K - 1) * L))
    x, f, f0, ok, res = _minimize(fun, x0, bounds, opts, _fisher_scale(model, x0))
    th, c, s2, al = unpack(x)
    folded = fold_doas(th, array)
    order = np.argsort(folded)
    p = c @ c.conj().T
    p = 0.5 * (p + p.conj().T)
    return MleResult(doas=folded[order], powers=np.diag(p).real[order].copy(),
                     noise_variance=float(s2), source_covariance=p[np.ix_(order, order)],
                     phases=np.exp(1j * al)[:, order], nll=n * f, nll_init=n * f0,
                     iterations=int(res.nit), converged=ok, message=str(res.message))
