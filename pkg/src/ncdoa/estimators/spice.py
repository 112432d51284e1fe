"""SPICE: sparse covariance fitting on a direction grid.

Solves ``min sum_k tr(R_k(x)^-1 Rhat_k)`` over ``x = (p, sigma^2) >= 0`` with
``w^T p + wbar sigma^2 = 1`` and ``R_k(x) = D_k diag(p) D_k^H + sigma^2 I``.

The objective ``f`` is homogeneous of degree -1, so the constrained minimizer
is the normalized minimizer of ``F(x) = f(x) + W^T x`` over the orthant; at
that point ``f = W^T x``.  The solver runs a short SPICE multiplicative
(majorize-minimize) warm start, prunes to the strongest local maxima, then
polishes with an active-set projected Newton method using the exact Hessian
and adds grid points whose multipliers are violated.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..geometry import ArrayGeometry, steering_vector, vec
from ..signals import CovarianceSet
from .grid import Grid

__all__ = ["SpiceOptions", "SpiceResult", "spice_weights", "spice_solve", "SpiceProblem"]

log = logging.getLogger(__name__)

# smallest admissible eigenvalue ratio of a model covariance
_COND_MIN = 1e-13
# Hessian eigenvalues below this fraction of the largest count as null
_HESS_RTOL = 1e-10


@dataclass(frozen=True)
class SpiceOptions:
    """Solver settings.

    Attributes
    ----------
    max_iter : int
        Cap on warm-start plus Newton iterations.
    tol : float
        Target for the complementarity residual (see ``SpiceResult``).
    warm_start : int
        Multiplicative iterations before the Newton phase.
    max_outer : int
        Cap on active-set refreshes.
    regularize : bool
        Diagonally load singular sample covariances instead of failing.
    """

    max_iter: int = 10_000
    tol: float = 1e-8
    warm_start: int = 200
    max_outer: int = 200
    regularize: bool = True


@dataclass
class SpiceResult:
    """Normalized SPICE solution.

    ``kkt_residual`` is ``max_g |min(mass_g, (W_g - q_g)/W_g)|`` where
    ``mass_g`` is the share of the constraint carried by entry ``g``.
    """

    powers: np.ndarray
    noise_variance: float
    objective_trace: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    kkt_residual: float = np.inf
    weights: np.ndarray | None = None
    noise_weight: float = np.nan

    @property
    def objective(self) -> float:
        return self.objective_trace[-1]

    @property
    def constraint_residual(self) -> float:
        return float(abs(self.weights @ self.powers + self.noise_weight * self.noise_variance - 1))


def _load(r, regularize):
    try:
        np.linalg.cholesky(r)
        return r
    except np.linalg.LinAlgError:
        if not regularize:
            raise np.linalg.LinAlgError("sample covariance is singular") from None
    m = r.shape[0]
    load = 1e-8 * np.trace(r).real / m
    if load <= 0:
        raise np.linalg.LinAlgError("sample covariance is zero")
    log.warning("singular sample covariance, loading diagonal with %.3e", load)
    return r + load * np.eye(m)


class SpiceProblem:
    """Dictionary and data for one SPICE instance.

    Subarrays are grouped by size so the per-iteration work is batched.
    """

    def __init__(self, array: ArrayGeometry, covset: CovarianceSet, grid: Grid,
                 regularize: bool = True):
        if len(covset) != array.n_subarrays:
            raise ValueError("covariance set and geometry disagree on K")
        if array.sizes != covset.sizes:
            raise ValueError("covariance sizes do not match the geometry")
        th = grid.radians
        self.grid = grid
        self.G = grid.size
        self.M = array.n_sensors
        rh = [_load(r, regularize) for r in covset.matrices]
        rows, start = [], 0
        for m in array.sizes:
            rows.append(np.arange(start, start + m * m))
            start += m * m
        self.n_rows = start
        self.groups = []
        for m in sorted(set(array.sizes)):
            ks = [k for k, mk in enumerate(array.sizes) if mk == m]
            d = np.stack([steering_vector(array.subarrays[k], th) for k in ks])  # n,m,G
            self.groups.append(dict(
                m=m, d=d, rh=np.stack([rh[k] for k in ks]),
                rows=np.concatenate([rows[k] for k in ks])))
        self.vb = np.empty((self.n_rows, self.G), complex)
        for g in self.groups:
            n, m, _ = g["d"].shape
            kr = np.einsum("njg,nig->njig", g["d"].conj(), g["d"]).reshape(n * m * m, -1)
            self.vb[g["rows"]] = kr
        self.ivec = np.concatenate([vec(np.eye(m)) for m in array.sizes])
        self.w, self.wbar = self._weights()
        self.W = np.append(self.w, self.wbar)

    def _weights(self):
        ri = np.empty(self.n_rows, complex)
        wbar = 0.0
        for g in self.groups:
            inv = np.linalg.inv(g["rh"])
            ri[g["rows"]] = inv.transpose(0, 2, 1).reshape(-1)
            wbar += np.trace(inv, axis1=1, axis2=2).real.sum()
        w = (self.vb.conj().T @ ri).real / self.M
        return w, wbar / self.M

    def evaluate(self, x):
        """Return ``f``, per-group ``R^-1`` and ``T = R^-1 Rhat R^-1``."""
        r = self.vb @ x[:-1] + x[-1] * self.ivec
        f = 0.0
        parts = []
        for g in self.groups:
            n, m = g["rh"].shape[0], g["m"]
            rk = r[g["rows"]].reshape(n, m, m).transpose(0, 2, 1)
            ev = np.linalg.eigvalsh(rk)
            if not np.all(ev[:, 0] > _COND_MIN * ev[:, -1]):
                raise np.linalg.LinAlgError("model covariance is numerically singular")
            inv = np.linalg.inv(rk)
            t = inv @ g["rh"] @ inv
            f += np.einsum("kij,kji->", inv, g["rh"]).real
            parts.append((inv, t))
        return f, parts

    def objective(self, x) -> float:
        """``f(x)``; ``inf`` where some model covariance is singular."""
        try:
            f = self.evaluate(x)[0]
        except np.linalg.LinAlgError:
            return np.inf
        return f if np.isfinite(f) and f >= 0 else np.inf

    def q(self, parts) -> np.ndarray:
        """``sum_k tr(A_i T_k)`` for every atom and the noise slot."""
        t = np.empty(self.n_rows, complex)
        qs = 0.0
        for g, (_, tk) in zip(self.groups, parts):
            t[g["rows"]] = tk.transpose(0, 2, 1).reshape(-1)
            qs += np.trace(tk, axis1=1, axis2=2).real.sum()
        return np.append((self.vb.conj().T @ t).real, qs)

    def hessian(self, idx, parts) -> np.ndarray:
        """Hessian of ``f`` restricted to ``idx`` (index ``G`` is the noise slot)."""
        atoms = idx[idx < self.G]
        na = atoms.size
        h = np.zeros((idx.size, idx.size))
        has_noise = idx.size > na
        for g, (inv, t) in zip(self.groups, parts):
            d = g["d"][:, :, atoms]
            b = np.einsum("kig,kij,kjh->kgh", d.conj(), inv, d)
            c = np.einsum("kig,kij,kjh->kgh", d.conj(), t, d)
            h[:na, :na] += 2 * np.real(b * c.conj()).sum(0)
            if has_noise:
                rt = inv @ t
                hs = 2 * np.real(np.einsum("kig,kij,kjg->g", d.conj(), rt, d))
                h[:na, na] += hs
                h[na, :na] += hs
                h[na, na] += 2 * np.trace(rt, axis1=1, axis2=2).real.sum()
        return h


def spice_weights(array: ArrayGeometry, covset: CovarianceSet, grid: Grid,
                  regularize: bool = True):
    """Weights ``w_g = (1/M) sum_k v_k^H Rhat_k^-1 v_k`` and ``wbar``.

    Examples
    --------
    >>> from ncdoa.geometry import ArrayGeometry
    >>> arr = ArrayGeometry.from_offsets([[[0, 0], [1, 0]]])
    >>> w, wbar = spice_weights(arr, CovarianceSet([np.eye(2)]), Grid.uniform(30.0))
    >>> np.allclose(w, 1.0), wbar
    (True, 1.0)
    """
    prob = SpiceProblem(array, covset, grid, regularize)
    return prob.w, prob.wbar


def _kkt(x, grad, W):
    """Complementarity residual, dimensionless."""
    mass = x * W / (W @ x)
    return float(np.max(np.abs(np.minimum(mass, grad / W))))


def _balance(prob, x):
    f = prob.objective(x)
    return x * np.sqrt(f / (prob.W @ x))


def _projected_newton(prob, x, idx, tol, budget):
    """Minimize ``F`` over ``x[idx] >= 0`` with other entries fixed at zero.

    Bertsekas-style: variables near the bound with positive gradient are held
    on a diagonally scaled gradient step, the rest take a Newton step on the
    range of the Hessian, and the step length is chosen by Armijo along the
    projection arc.  Along Hessian null directions ``F`` is linear, so a ratio
    test moves straight to the next bound.  Falls back to a scaled
    projected-gradient step if both fail.
    """
    W = prob.W[idx]
    steps = 0
    while steps < budget:
        f, parts = prob.evaluate(x)
        y = x[idx]
        g = W - prob.q(parts)[idx]
        scale = W @ y
        if np.max(np.abs(np.minimum(y * W / scale, g / W))) < tol:
            break
        h = prob.hessian(idx, parts)
        hd = np.diag(h)
        hd = np.maximum(hd, 1e-12 * hd.max(initial=0.0) + 1e-300)
        eps = min(1e-3 * y.max(), np.linalg.norm(y - np.maximum(y - g / hd, 0.0)))
        act = (y <= eps) & (g > 0)
        fr = ~act
        d = np.zeros_like(y)
        face = np.zeros_like(y)
        lam, u = np.linalg.eigh(h[np.ix_(fr, fr)])
        rng = lam > _HESS_RTOL * lam.max(initial=0.0)
        ur, un = u[:, rng], u[:, ~rng]
        d[fr] = -ur @ ((ur.T @ g[fr]) / lam[rng])
        d[act] = -g[act] / hd[act]
        # f is flat along Hessian null directions (redundant atoms) while
        # W^T x is linear there: walk to the nearest bound in one step
        if un.shape[1]:
            nd = -un @ (un.T @ g[fr])
            neg = nd < -1e-14 * np.abs(nd).max(initial=0.0)
            if np.any(neg):
                t = np.min(y[fr][neg] / -nd[neg])
                face[fr] = t * nd
        F0 = f + W @ y
        moved = False
        for direction in (face, d, -g / hd):
            if not np.any(direction):
                continue
            a = 1.0
            while a > 1e-12:
                yn = np.maximum(y + a * direction, 0.0)
                xn = x.copy()
                xn[idx] = yn
                Fn = prob.objective(xn) + W @ yn
                if direction is d:
                    dec = -a * (g[fr] @ d[fr]) + g[act] @ (y[act] - yn[act])
                elif direction is face:
                    dec = 0.0
                else:
                    dec = g @ (y - yn)
                if Fn <= F0 - 1e-4 * dec and Fn < F0:
                    moved = True
                    break
                a *= 0.5
            if moved:
                break
        if not moved:
            # near the optimum F cannot resolve the decrease; accept the full
            # Newton step if F stays within round-off and stationarity improves
            xn = x.copy()
            xn[idx] = np.maximum(y + d, 0.0)
            Fn = prob.objective(xn) + W @ xn[idx]
            if Fn <= F0 + 1e-13 * abs(F0):
                gn = W - prob.q(prob.evaluate(xn)[1])[idx]
                yn = xn[idx]
                kn = np.max(np.abs(np.minimum(yn * W / (W @ yn), gn / W)))
                moved = kn < np.max(np.abs(np.minimum(y * W / scale, g / W)))
        steps += 1
        if not moved:
            break
        x = xn
    return x, steps


def spice_solve(array: ArrayGeometry, covset: CovarianceSet, grid: Grid,
                opts: SpiceOptions | None = None, problem: SpiceProblem | None = None) -> SpiceResult:
    """Solve the SPICE program.

    Parameters
    ----------
    problem : SpiceProblem, optional
        Prebuilt instance (skips dictionary construction).

    Returns
    -------
    SpiceResult
        Powers and noise variance scaled to satisfy the constraint; the
        objective trace is non-increasing.
    """
    opts = opts or SpiceOptions()
    prob = problem or SpiceProblem(array, covset, grid, opts.regularize)
    G, W = prob.G, prob.W
    sw = np.sqrt(W)
    x = np.ones(G + 1) / W.sum()
    trace = []
    iters = 0
    # the trace records the incumbent (best normalized point so far)
    best_x, best_f = x, prob.objective(x)
    trace.append(best_f)
    for _ in range(min(opts.warm_start, opts.max_iter)):
        f, parts = prob.evaluate(x)
        if f <= best_f:
            best_x, best_f = x, f
        trace.append(best_f)
        beta = x * np.sqrt(np.maximum(prob.q(parts), 0.0))
        x = beta / sw / (sw @ beta)
        iters += 1
    f = prob.objective(x)
    if f <= best_f:
        best_x, best_f = x, f
    trace.append(best_f)
    x = best_x

    # keep the strongest local maxima of the warm start, plus the noise slot
    pa = x[:G]
    peaks = np.flatnonzero((pa >= np.r_[0.0, pa[:-1]]) & (pa >= np.r_[pa[1:], 0.0]) & (pa > 0))
    peaks = peaks[np.argsort(-pa[peaks], kind="stable")][:prob.n_rows]
    keep = np.zeros(G + 1, bool)
    keep[peaks] = True
    keep[G] = True
    x = np.where(keep, x, 0.0)

    kkt, last_f = np.inf, np.inf
    for _ in range(opts.max_outer):
        x = _balance(prob, x)
        f, parts = prob.evaluate(x)
        fn = last_f = f * (W @ x)  # objective at the normalized point
        if fn <= best_f:
            best_x, best_f = x, fn
        trace.append(best_f)
        grad = W - prob.q(parts)
        kkt = _kkt(x, grad, W)
        if kkt < opts.tol or iters >= opts.max_iter:
            break
        ga = grad[:G] / W[:G]
        zero = x[:G] == 0
        lm = np.flatnonzero(zero & (ga < 0) & np.r_[True, ga[1:] <= ga[:-1]]
                            & np.r_[ga[:-1] <= ga[1:], True])
        lm = lm[np.argsort(ga[lm], kind="stable")][:10]
        idx = np.unique(np.r_[np.flatnonzero(x > 0), lm, G])
        x, steps = _projected_newton(prob, x, idx, opts.tol, min(50, opts.max_iter - iters))
        iters += max(steps, 1)
        x[x < 0] = 0.0

    # a stationary last iterate certifies the incumbent when they tie to round-off
    converged = bool(kkt < opts.tol) and last_f - best_f <= 1e-12 * abs(best_f)
    x = best_x
    c = W @ x
    return SpiceResult(powers=x[:G] / c, noise_variance=float(x[G] / c),
                       objective_trace=trace, iterations=iters,
                       converged=converged, kkt_residual=kkt,
                       weights=prob.w, noise_weight=prob.wbar)
