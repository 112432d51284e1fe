"""Source and noise models, snapshot synthesis and covariance sets."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import ArrayGeometry, SubarrayGeometry, phase_shift, steering_vector, vec

__all__ = [
    "SourceModel",
    "NoiseModel",
    "CovarianceSet",
    "snr_to_noise_variance",
    "true_covariance",
    "true_covariances",
    "generate_snapshots",
    "sample_covariance",
    "sample_covariances",
    "stack_vectorize",
    "psd_factor",
]

_PSD_TOL = 1e-12


def psd_factor(p: np.ndarray) -> np.ndarray:
    """Return ``C`` with ``C C^H = P`` for Hermitian psd ``P``.

    Uses an eigendecomposition so rank-deficient (coherent) ``P`` works.

    Raises
    ------
    ValueError
        If ``P`` has an eigenvalue below ``-1e-12 * max|eig|``.
    """
    p = np.asarray(p, dtype=complex)
    if not np.allclose(p, p.conj().T, atol=1e-12 * max(1.0, np.abs(p).max())):
        raise ValueError("source covariance is not Hermitian")
    e, u = np.linalg.eigh(p)
    scale = max(np.abs(e).max(), 1e-300)
    if e.min() < -_PSD_TOL * scale:
        raise ValueError("source covariance is not positive semidefinite")
    return u * np.sqrt(np.clip(e, 0.0, None))


@dataclass(frozen=True)
class SourceModel:
    """Far-field sources.

    Parameters
    ----------
    doas : array_like
        Directions in radians.
    powers : array_like
        Positive source powers (diagonal of P).
    cross_corr : array_like, optional
        Hermitian off-diagonal part F of P, zero diagonal.
    """

    doas: np.ndarray
    powers: np.ndarray
    cross_corr: np.ndarray | None = None

    def __post_init__(self):
        doas = np.atleast_1d(np.asarray(self.doas, dtype=float))
        powers = np.broadcast_to(np.asarray(self.powers, dtype=float), doas.shape).copy()
        if np.any(powers <= 0):
            raise ValueError("source powers must be positive")
        f = np.zeros((doas.size, doas.size), complex) if self.cross_corr is None \
            else np.array(self.cross_corr, dtype=complex)
        if f.shape != (doas.size, doas.size):
            raise ValueError("cross_corr must be L x L")
        if np.any(np.diag(f) != 0):
            raise ValueError("cross_corr must have a zero diagonal")
        object.__setattr__(self, "doas", doas)
        object.__setattr__(self, "powers", powers)
        object.__setattr__(self, "cross_corr", f)
        psd_factor(self.source_covariance)

    @classmethod
    def correlated_pair(cls, doas, power: float = 1.0, eps: complex = 0.0):
        """Two sources with ``P = power * [[1, eps], [conj(eps), 1]]``."""
        f = power * np.array([[0, eps], [np.conj(eps), 0]], dtype=complex)
        return cls(doas, [power, power], f)

    @property
    def n_sources(self) -> int:
        return self.doas.size

    @property
    def source_covariance(self) -> np.ndarray:
        return np.diag(self.powers).astype(complex) + self.cross_corr

    @property
    def is_uncorrelated(self) -> bool:
        return not np.any(self.cross_corr)


@dataclass(frozen=True)
class NoiseModel:
    """White circular Gaussian noise with per-sensor variance."""

    variance: float

    def __post_init__(self):
        if not self.variance > 0:
            raise ValueError("noise variance must be positive")

    @classmethod
    def from_snr(cls, snr_db: float, power: float = 1.0):
        return cls(snr_to_noise_variance(snr_db, power))


def snr_to_noise_variance(snr_db: float, power: float = 1.0) -> float:
    """``sigma^2 = power / 10**(snr/10)``."""
    return float(power * 10.0 ** (-snr_db / 10.0))


@dataclass
class CovarianceSet:
    """Per-subarray Hermitian covariance matrices.

    ``kind`` is ``"true"`` or ``"sample"``; ``n_snapshots`` is set for sample
    covariances.
    """

    matrices: list
    kind: str = "sample"
    n_snapshots: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("true", "sample"):
            raise ValueError(f"unknown covariance kind {self.kind!r}")
        self.matrices = [np.asarray(r, dtype=complex) for r in self.matrices]
        for r in self.matrices:
            if r.ndim != 2 or r.shape[0] != r.shape[1]:
                raise ValueError("covariances must be square")
            tol = 1e-12 * max(1.0, np.abs(r).max())
            if np.abs(r - r.conj().T).max() > tol:
                raise ValueError("covariance is not Hermitian")

    def __len__(self):
        return len(self.matrices)

    @property
    def sizes(self) -> list[int]:
        return [r.shape[0] for r in self.matrices]


def _mixing(sub: SubarrayGeometry, doas) -> np.ndarray:
    return steering_vector(sub, doas) * phase_shift(sub.displacement, doas)


def true_covariance(sub: SubarrayGeometry, model: SourceModel, noise: NoiseModel) -> np.ndarray:
    """``A P A^H + sigma^2 I`` with ``A = V Phi`` for one subarray.

    Examples
    --------
    >>> g = SubarrayGeometry([[0, 0], [1, 0]])
    >>> true_covariance(g, SourceModel([0.0], [1.0]), NoiseModel(1.0)).real
    array([[2., 1.],
           [1., 2.]])
    """
    a = _mixing(sub, model.doas)
    r = a @ model.source_covariance @ a.conj().T + noise.variance * np.eye(sub.n_sensors)
    return 0.5 * (r + r.conj().T)


def true_covariances(array: ArrayGeometry, model: SourceModel, noise: NoiseModel) -> CovarianceSet:
    return CovarianceSet([true_covariance(s, model, noise) for s in array.subarrays], kind="true")


def _cgauss(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def generate_snapshots(array: ArrayGeometry, model: SourceModel, noise: NoiseModel,
                       n: int, rng=None, shared_sources: bool = False) -> list:
    """Draw ``n`` snapshots per subarray.

    Parameters
    ----------
    rng : numpy Generator, int or SeedSequence
        Randomness source; an int or SeedSequence seeds a fresh PCG64.
    shared_sources : bool
        If True all subarrays observe the same source samples; otherwise each
        subarray gets an independent draw with the same statistics.

    Returns
    -------
    list of ndarray, each ``(n, M_k)``
    """
    if n < 1:
        raise ValueError("need at least one snapshot")
    rng = np.random.default_rng(rng)
    c = psd_factor(model.source_covariance)
    L = model.n_sources
    shared = _cgauss(rng, (n, L)) @ c.T if shared_sources else None
    out = []
    for sub in array.subarrays:
        s = shared if shared_sources else _cgauss(rng, (n, L)) @ c.T
        a = _mixing(sub, model.doas)
        x = s @ a.T + np.sqrt(noise.variance) * _cgauss(rng, (n, sub.n_sensors))
        out.append(x)
    return out


def sample_covariance(batch: np.ndarray) -> np.ndarray:
    """``(1/N) sum_t x(t) x(t)^H`` for rows ``x(t)`` of ``batch``.

    Examples
    --------
    >>> sample_covariance(np.array([[1, 1j]]))
    array([[1.+0.j, 0.-1.j],
           [0.+1.j, 1.+0.j]])
    """
    x = np.atleast_2d(np.asarray(batch, dtype=complex))
    r = x.T @ x.conj() / x.shape[0]
    return 0.5 * (r + r.conj().T)


def sample_covariances(batches) -> CovarianceSet:
    n = batches[0].shape[0]
    return CovarianceSet([sample_covariance(b) for b in batches], kind="sample", n_snapshots=n)


def stack_vectorize(covset) -> np.ndarray:
    """Concatenate column-major ``vec(R_k)`` over subarrays."""
    mats = covset.matrices if isinstance(covset, CovarianceSet) else covset
    return np.concatenate([vec(r) for r in mats])
