"""Cubature grids on the sphere and geodesic distance.

Grids are Gauss-Legendre rings in ``cos(theta)`` times equispaced
longitudes.  A grid of degree ``L`` has ``ceil((L + 1) / 2)`` rings and
``L + 1`` longitudes, and integrates every spherical polynomial of degree
``<= L`` exactly with positive weights summing to ``4 pi``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidArgument, ResourceLimitError

MAX_DEGREE = 1024


@dataclass(frozen=True)
class SpherePoint:
    theta: float
    phi: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.theta <= math.pi:
            raise InvalidArgument(f"colatitude {self.theta} outside [0, pi]")
        object.__setattr__(self, "phi", float(self.phi) % (2.0 * math.pi))

    def unit_vector(self) -> np.ndarray:
        return unit_vectors(self.theta, self.phi)


def unit_vectors(theta, phi) -> np.ndarray:
    """Cartesian unit vectors, shape ``(..., 3)``."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    st = np.sin(theta)
    return np.stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)], axis=-1)


@dataclass(frozen=True, eq=False)
class CubatureGrid:
    """Product cubature grid.

    Points are stored ring-major: index ``k = r * n_lon + i`` is ring ``r``
    (colatitude ``ring_theta[r]``) at longitude ``2 pi i / n_lon``.
    """

    degree: int
    ring_theta: np.ndarray
    ring_weights: np.ndarray
    n_lon: int
    scale: int | None = None

    @property
    def n_rings(self) -> int:
        return self.ring_theta.size

    @property
    def point_count(self) -> int:
        return self.n_rings * self.n_lon

    @property
    def N(self) -> float:
        return math.sqrt(self.point_count)

    @property
    def lon(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(self.n_lon) / self.n_lon

    @property
    def theta(self) -> np.ndarray:
        return np.repeat(self.ring_theta, self.n_lon)

    @property
    def phi(self) -> np.ndarray:
        return np.tile(self.lon, self.n_rings)

    @property
    def weights(self) -> np.ndarray:
        return np.repeat(self.ring_weights * (2.0 * np.pi / self.n_lon), self.n_lon)

    @property
    def vectors(self) -> np.ndarray:
        return unit_vectors(self.theta, self.phi)

    def point(self, k: int) -> SpherePoint:
        r, i = divmod(int(k), self.n_lon)
        return SpherePoint(float(self.ring_theta[r]), float(self.lon[i]))

    def points(self) -> list[SpherePoint]:
        return [SpherePoint(float(t), float(p)) for t, p in zip(self.theta, self.phi)]

    def integrate(self, values) -> float:
        total = np.dot(self.weights, np.asarray(values))
        return complex(total) if np.iscomplexobj(total) else float(total)

    def save(self, path) -> None:
        rows = ["theta phi weight"]
        for t, p, w in zip(self.theta, self.phi, self.weights):
            rows.append(f"{t:.17g} {p:.17g} {w:.17g}")
        Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")


def build_grid(L: int, scale: int | None = None) -> CubatureGrid:
    if L < 0 or int(L) != L:
        raise InvalidArgument(f"degree must be a nonnegative integer, got {L}")
    if L > MAX_DEGREE:
        raise ResourceLimitError(f"grid degree {L} exceeds configured maximum {MAX_DEGREE}")
    n_rings = (int(L) + 2) // 2
    x, w = np.polynomial.legendre.leggauss(n_rings)
    # north to south
    order = np.argsort(-x)
    return CubatureGrid(int(L), np.arccos(x[order]), w[order], int(L) + 1, scale)


def scale_degree(j: int, B: float) -> int:
    """Degree needed to integrate products of two scale-``j`` kernels."""
    return int(math.ceil(2.0 * B ** (j + 1) - 1e-9))


def grid_for_scale(j: int, B: float, max_degree: int = MAX_DEGREE) -> CubatureGrid:
    if j < 0:
        raise InvalidArgument(f"scale must be nonnegative, got {j}")
    L = scale_degree(j, B)
    if L > max_degree:
        raise ResourceLimitError(f"scale {j} needs degree {L} > maximum {max_degree}")
    return build_grid(L, scale=j)


def count_constant(grid: CubatureGrid, B: float) -> float:
    """Smallest ``c`` with ``B**(2j) / c <= #points <= c B**(2j)`` for this grid."""
    if grid.scale is None:
        raise InvalidArgument("grid has no scale tag")
    ref = B ** (2 * grid.scale)
    n = grid.point_count
    return max(n / ref, ref / n)


def geodesic_distance(p, q):
    """Great-circle distance via ``atan2(|p x q|, p . q)``.

    Accepts :class:`SpherePoint` objects or arrays of unit vectors with a
    trailing axis of length 3 (broadcast against each other).
    """
    u = p.unit_vector() if isinstance(p, SpherePoint) else np.asarray(p, dtype=float)
    v = q.unit_vector() if isinstance(q, SpherePoint) else np.asarray(q, dtype=float)
    cross = np.linalg.norm(np.cross(u, v), axis=-1)
    dot = np.sum(u * v, axis=-1)
    d = np.arctan2(cross, dot)
    return float(d) if np.ndim(d) == 0 else d


def kernel_row_sum(grid: CubatureGrid, k: int, M: float, B: float, j: int) -> float:
    """``sum_k' (1 + B**j d(xi_k, xi_k'))**(-M)`` over all grid points."""
    if M < 3:
        raise InvalidArgument(f"row-sum bound needs M >= 3, got {M}")
    vec = grid.vectors
    d = geodesic_distance(vec[k], vec)
    return float(np.sum((1.0 + B ** j * d) ** (-float(M))))


def max_kernel_row_sum(grid: CubatureGrid, M: float, B: float, j: int) -> float:
    """Max of :func:`kernel_row_sum` over ``k``.

    Longitude rotations permute the grid, so one point per ring suffices.
    """
    if M < 3:
        raise InvalidArgument(f"row-sum bound needs M >= 3, got {M}")
    return max(kernel_row_sum(grid, r * grid.n_lon, M, B, j) for r in range(grid.n_rings))
