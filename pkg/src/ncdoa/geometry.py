"""Planar subarray geometry, steering vectors and co-array manifolds.

Positions are in half-wavelength units, so the phase of a plane wave at
offset ``z`` from direction ``theta`` is ``pi * z @ nu(theta)``.  All angles
in this module are radians.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "SubarrayGeometry",
    "ArrayGeometry",
    "direction_vector",
    "steering_vector",
    "steering_derivative",
    "phase_shift",
    "co_subarray_manifold",
    "co_array_manifold",
    "co_subarray_derivative",
    "co_manifold_derivative",
    "vec",
    "benchmark_array",
    "BENCHMARK_FIRST_SENSORS",
    "BENCHMARK_SPACINGS",
]


def vec(a: np.ndarray) -> np.ndarray:
    """Column-major vectorization."""
    return np.asarray(a).reshape(-1, order="F")


@dataclass(frozen=True)
class SubarrayGeometry:
    """One calibrated subarray.

    Parameters
    ----------
    relative_positions : array_like, shape (M, 2)
        Sensor offsets from the first sensor. The first row must be (0, 0).
    displacement : array_like, shape (2,)
        Position of the first sensor in the global frame. Only the simulator
        and the correlated CRB use it.
    """

    relative_positions: np.ndarray
    displacement: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        pos = np.array(self.relative_positions, dtype=float).reshape(-1, 2)
        if pos.shape[0] < 1:
            raise ValueError("a subarray needs at least one sensor")
        if not np.all(pos[0] == 0.0):
            raise ValueError("first relative position must be the origin")
        disp = np.array(self.displacement, dtype=float).reshape(2)
        pos.flags.writeable = False
        disp.flags.writeable = False
        object.__setattr__(self, "relative_positions", pos)
        object.__setattr__(self, "displacement", disp)

    @property
    def n_sensors(self) -> int:
        return self.relative_positions.shape[0]


@dataclass(frozen=True)
class ArrayGeometry:
    """Ordered collection of subarrays; subarray 0 sits at the origin."""

    subarrays: tuple

    def __post_init__(self):
        subs = tuple(self.subarrays)
        if len(subs) < 1:
            raise ValueError("need at least one subarray")
        if not np.all(subs[0].displacement == 0.0):
            raise ValueError("first subarray displacement must be (0, 0)")
        object.__setattr__(self, "subarrays", subs)

    @classmethod
    def from_offsets(cls, offsets: Sequence, displacements: Sequence | None = None):
        """Build from nested position lists.

        Examples
        --------
        >>> arr = ArrayGeometry.from_offsets([[[0, 0], [1, 0]], [[0, 0], [2, 0]]])
        >>> arr.n_sensors
        4
        """
        if displacements is None:
            displacements = [(0.0, 0.0)] * len(offsets)
        if len(displacements) != len(offsets):
            raise ValueError("offsets and displacements differ in length")
        return cls(tuple(SubarrayGeometry(o, d) for o, d in zip(offsets, displacements)))

    @property
    def n_subarrays(self) -> int:
        return len(self.subarrays)

    @property
    def sizes(self) -> list[int]:
        return [s.n_sensors for s in self.subarrays]

    @property
    def n_sensors(self) -> int:
        return sum(self.sizes)

    @property
    def coarray_size(self) -> int:
        return sum(m * m for m in self.sizes)

    @property
    def is_linear_x(self) -> bool:
        """True when every intra-subarray offset lies on the x axis."""
        return all(np.all(s.relative_positions[:, 1] == 0.0) for s in self.subarrays)


def direction_vector(theta):
    """Unit vector ``[sin theta, cos theta]`` (last axis)."""
    theta = np.asarray(theta, dtype=float)
    return np.stack([np.sin(theta), np.cos(theta)], axis=-1)


def _phase_arg(pos, theta):
    theta = np.asarray(theta, dtype=float)
    return np.pi * (np.multiply.outer(pos[:, 0], np.sin(theta))
                    + np.multiply.outer(pos[:, 1], np.cos(theta)))


def steering_vector(geom: SubarrayGeometry, theta) -> np.ndarray:
    """Subarray response, shape ``(M,)`` for scalar theta or ``(M, L)``.

    Examples
    --------
    >>> g = SubarrayGeometry([[0, 0], [2, 0]])
    >>> np.round(steering_vector(g, np.pi / 6), 12)
    array([ 1.+0.j, -1.+0.j])
    """
    return np.exp(1j * _phase_arg(geom.relative_positions, theta))


def steering_derivative(geom: SubarrayGeometry, theta) -> np.ndarray:
    """Derivative of :func:`steering_vector` with respect to theta."""
    pos = geom.relative_positions
    theta = np.asarray(theta, dtype=float)
    rate = np.pi * (np.multiply.outer(pos[:, 0], np.cos(theta))
                    - np.multiply.outer(pos[:, 1], np.sin(theta)))
    return 1j * rate * steering_vector(geom, theta)


def phase_shift(displacement, theta):
    """Unknown inter-subarray phase ``exp(j pi zeta^T nu(theta))``."""
    d = np.asarray(displacement, dtype=float)
    return np.exp(1j * np.pi * (direction_vector(theta) @ d))


def _khatri_rao_self(v: np.ndarray, dv: np.ndarray | None = None) -> np.ndarray:
    # column g: conj(v_g) kron v_g, index j*M + i -> conj(v_j) v_i
    m = v.shape[0]
    if dv is None:
        return np.einsum("jg,ig->jig", v.conj(), v).reshape(m * m, -1)
    return (np.einsum("jg,ig->jig", dv.conj(), v)
            + np.einsum("jg,ig->jig", v.conj(), dv)).reshape(m * m, -1)


def co_subarray_manifold(geom: SubarrayGeometry, thetas) -> np.ndarray:
    """Columns ``conj(v(theta_l)) kron v(theta_l)``, shape ``(M**2, L)``."""
    v = steering_vector(geom, np.atleast_1d(thetas))
    return _khatri_rao_self(v)


def co_array_manifold(array: ArrayGeometry, thetas) -> np.ndarray:
    """Stack of :func:`co_subarray_manifold` over subarrays."""
    return np.vstack([co_subarray_manifold(s, thetas) for s in array.subarrays])


def co_subarray_derivative(geom: SubarrayGeometry, thetas) -> np.ndarray:
    """Column-wise theta derivative of :func:`co_subarray_manifold`."""
    th = np.atleast_1d(thetas)
    return _khatri_rao_self(steering_vector(geom, th), steering_derivative(geom, th))


def co_manifold_derivative(array: ArrayGeometry, thetas) -> np.ndarray:
    """Column-wise theta derivative of :func:`co_array_manifold`."""
    return np.vstack([co_subarray_derivative(s, thetas) for s in array.subarrays])


# Twelve two-sensor subarrays used by the benchmark scenarios.
BENCHMARK_FIRST_SENSORS = (
    (0.0, 0.0), (17.3, 6.0), (-2.4, 6.2), (10.5, -2.0), (12.7, 2.1), (4.6, -2.4),
    (4.6, 4.5), (4.5, 5.3), (2.3, 9.0), (10.2, 8.1), (10.2, 4.0), (13.4, 6.0),
)
BENCHMARK_SPACINGS = (6.5, 4.4, 3.5, 2.6, 2.6, 2.5, 1.9, 1.5, 1.4, 1.3, 1.0, 0.5)


def benchmark_array(extra_sensor=None) -> ArrayGeometry:
    """Twelve-subarray benchmark geometry.

    Parameters
    ----------
    extra_sensor : array_like of 2 floats, optional
        If given, a third sensor at this offset is added to subarray 0.
    """
    offsets = [[[0.0, 0.0], [d, 0.0]] for d in BENCHMARK_SPACINGS]
    if extra_sensor is not None:
        offsets[0].append(list(map(float, extra_sensor)))
    return ArrayGeometry.from_offsets(offsets, BENCHMARK_FIRST_SENSORS)
