"""Needlets, needlet coefficients and their second-order structure.

For scale ``j`` on a cubature grid with nodes ``xi_k`` and weights
``lam_k``, the needlet and its coefficient are

    psi_jk(x) = sqrt(lam_k) sum_l b(l / B^j) L_l(<x, xi_k>)
    beta_jk   = sqrt(lam_k) sum_l b(l / B^j) sum_m a_lm Y_lm(xi_k)

and, for an isotropic field with spectrum ``C_l``,

    E[beta_jk beta_jk'] = sqrt(lam_k lam_k') sum_l b^2(l / B^j) C_l L_l(<xi_k, xi_k'>).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSpectrumError, InvalidArgument, PreconditionError
from .filter_bank import FilterProfile, support, window_weights
from .harmonics import HarmonicCoefficients, RingBasis, legendre_series
from .random_field import PowerSpectrum
from .sphere_geom import CubatureGrid, SpherePoint, geodesic_distance, unit_vectors

DEFAULT_PAIR_CAP = 200_000


@dataclass(eq=False)
class NeedletCoefficients:
    j: int
    grid: CubatureGrid
    beta: np.ndarray
    sigma2: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.beta = np.asarray(self.beta, dtype=float)
        if self.beta.shape[-1] != self.grid.point_count:
            raise InvalidArgument("beta length must equal the grid point count")

    @property
    def beta_hat(self) -> np.ndarray:
        if self.sigma2 is None:
            raise PreconditionError("coefficients are not normalised; attach sigma2 first")
        return self.beta / np.sqrt(self.sigma2)

    def normalized(self, sigma2) -> "NeedletCoefficients":
        return NeedletCoefficients(self.j, self.grid, self.beta, np.asarray(sigma2, dtype=float))


def _kernel_weights(profile: FilterProfile, j: int, power: int = 1) -> np.ndarray:
    hi = support(profile, j)[1]
    return np.asarray(window_weights(profile, j, max(hi, 1))) ** power


def needlet_kernel(profile: FilterProfile, j: int, t) -> np.ndarray:
    """``M_j(t) = sum_l b(l / B^j) L_l(t)``."""
    return legendre_series(_kernel_weights(profile, j, 1), t)


def lambda_kernel(profile: FilterProfile, j: int, t) -> np.ndarray:
    """``Lambda_j(t) = sum_l b^2(l / B^j) L_l(t)``."""
    return legendre_series(_kernel_weights(profile, j, 2), t)


def _as_vectors(x) -> np.ndarray:
    if isinstance(x, SpherePoint):
        return x.unit_vector()
    if isinstance(x, CubatureGrid):
        return x.vectors
    return np.asarray(x, dtype=float)


def psi_eval(profile: FilterProfile, j: int, grid: CubatureGrid, k: int, x):
    """Needlet ``psi_jk`` at ``x`` (a point, a grid, or unit vectors ``(..., 3)``)."""
    if not 0 <= k < grid.point_count:
        raise InvalidArgument(f"point index {k} out of range")
    center = unit_vectors(grid.theta[k], grid.phi[k])
    t = np.clip(_as_vectors(x) @ center, -1.0, 1.0)
    out = math.sqrt(grid.weights[k]) * needlet_kernel(profile, j, t)
    return float(out) if np.ndim(out) == 0 else out


class NeedletAnalyzer:
    """Harmonic-route coefficients for one scale, reusable across realisations."""

    def __init__(self, profile: FilterProfile, j: int, grid: CubatureGrid):
        self.profile = profile
        self.j = j
        self.grid = grid
        self.l_hi = support(profile, j)[1]
        self.b = np.asarray(window_weights(profile, j, self.l_hi))
        self.sqrt_w = np.sqrt(grid.weights)
        self._basis = RingBasis(grid, self.l_hi)

    def beta(self, alm: np.ndarray) -> np.ndarray:
        """``beta`` for ``alm`` of shape ``(..., L+1, L+1)`` with ``L >= l_hi``."""
        alm = np.asarray(alm)
        if alm.shape[-1] - 1 < self.l_hi:
            raise PreconditionError(
                f"coefficients reach l = {alm.shape[-1] - 1}, scale {self.j} needs l = {self.l_hi}"
            )
        sub = alm[..., : self.l_hi + 1, : self.l_hi + 1] * self.b[:, None]
        return self._basis.synthesize(sub) * self.sqrt_w


def needlet_coeffs(coeffs: HarmonicCoefficients, profile: FilterProfile, j: int, grid: CubatureGrid) -> NeedletCoefficients:
    coeffs.validate()
    beta = NeedletAnalyzer(profile, j, grid).beta(coeffs.alm)
    return NeedletCoefficients(j, grid, beta)


def band_power(spectrum: PowerSpectrum, profile: FilterProfile, j: int) -> float:
    """``sum_l b^2(l / B^j) C_l (2l + 1) / (4 pi)``."""
    lo, hi = support(profile, j)
    if spectrum.l_max < hi:
        raise PreconditionError(f"spectrum reaches l = {spectrum.l_max}, scale {j} needs l = {hi}")
    b2 = _kernel_weights(profile, j, 2)
    ell = np.arange(hi + 1)
    return float(np.sum(b2 * spectrum.cl[: hi + 1] * (2 * ell + 1)) / (4.0 * math.pi))


def coeff_variance(spectrum: PowerSpectrum, profile: FilterProfile, j: int, grid: CubatureGrid) -> np.ndarray:
    s = band_power(spectrum, profile, j)
    if s <= 0.0:
        raise DegenerateSpectrumError(f"spectrum vanishes on the support of scale {j}")
    return grid.weights * s


def correlation_function(spectrum: PowerSpectrum, profile: FilterProfile, j: int):
    """Callable ``t -> Cor(beta_jk, beta_jk')`` for ``t = <xi_k, xi_k'>``."""
    s = band_power(spectrum, profile, j)
    if s <= 0.0:
        raise DegenerateSpectrumError(f"spectrum vanishes on the support of scale {j}")
    hi = support(profile, j)[1]
    c = _kernel_weights(profile, j, 2) * spectrum.cl[: hi + 1] / s

    def cor(t):
        return legendre_series(c, t)

    return cor


def analytic_correlation(spectrum: PowerSpectrum, profile: FilterProfile, j: int, grid: CubatureGrid, k: int, k2: int) -> float:
    if k == k2:
        return 1.0
    vec = grid.vectors
    t = float(np.clip(vec[k] @ vec[k2], -1.0, 1.0))
    return float(correlation_function(spectrum, profile, j)(t))


def correlation_matrix(spectrum: PowerSpectrum, profile: FilterProfile, j: int, grid: CubatureGrid) -> np.ndarray:
    """Full ``gamma[k, k']`` matrix; memory is ``O(N_j^4)``."""
    vec = grid.vectors
    gamma = correlation_function(spectrum, profile, j)(np.clip(vec @ vec.T, -1.0, 1.0))
    np.fill_diagonal(gamma, 1.0)
    return gamma


def gamma_power_sums(
    spectrum: PowerSpectrum,
    profile: FilterProfile,
    j: int,
    grid: CubatureGrid,
    powers=(1, 2, 3, 4),
    chunk: int = 400_000,
) -> dict[int, float]:
    """``S_q = sum_{k, k'} gamma_{kk'}^q`` over all ordered pairs.

    A longitude shift by ``2 pi / n_lon`` permutes the grid, so the pair
    sum equals ``n_lon`` times the sum over rows of one meridian.
    """
    cor = correlation_function(spectrum, profile, j)
    vec = grid.vectors
    ref = vec[:: grid.n_lon]
    sums = {q: 0.0 for q in powers}
    rows_per_chunk = max(1, chunk // grid.point_count)
    for s in range(0, ref.shape[0], rows_per_chunk):
        t = np.clip(ref[s : s + rows_per_chunk] @ vec.T, -1.0, 1.0)
        g = cor(t)
        r = np.arange(s, min(s + rows_per_chunk, ref.shape[0]))
        g[r - s, r * grid.n_lon] = 1.0
        for q in powers:
            sums[q] += math.fsum((g ** q).ravel())
    return {q: v * grid.n_lon for q, v in sums.items()}


def cross_scale_covariance(
    spectrum: PowerSpectrum,
    profile: FilterProfile,
    j: int,
    j2: int,
    grid: CubatureGrid,
    grid2: CubatureGrid,
    k: int,
    k2: int,
) -> float:
    """``E[beta_jk beta_j'k']``; exactly zero when the window supports are disjoint."""
    lo1, hi1 = support(profile, j)
    lo2, hi2 = support(profile, j2)
    lo, hi = max(lo1, lo2), min(hi1, hi2)
    if lo > hi:
        return 0.0
    if spectrum.l_max < hi:
        raise PreconditionError(f"spectrum reaches l = {spectrum.l_max}, needs l = {hi}")
    b1 = np.asarray(window_weights(profile, j, hi))
    b2 = np.asarray(window_weights(profile, j2, hi))
    c = b1 * b2 * spectrum.cl[: hi + 1]
    t = float(np.clip(grid.vectors[k] @ grid2.vectors[k2], -1.0, 1.0))
    return float(math.sqrt(grid.weights[k] * grid2.weights[k2]) * legendre_series(c, t))


def _reference_pairs(grid: CubatureGrid, pair_cap: int) -> tuple[np.ndarray, np.ndarray]:
    """Pairs (one meridian x all points), thinned by distance rank if above the cap."""
    vec = grid.vectors
    ref = vec[:: grid.n_lon]
    d = geodesic_distance(ref[:, None, :], vec[None, :, :]).ravel()
    t = np.clip((ref @ vec.T).ravel(), -1.0, 1.0)
    if d.size > pair_cap:
        order = np.argsort(d, kind="stable")
        pick = order[np.unique(np.linspace(0, d.size - 1, pair_cap).round().astype(int))]
        d, t = d[pick], t[pick]
    return d, t


def decay_diagnostic(
    spectrum: PowerSpectrum,
    profile: FilterProfile,
    j: int,
    M: float,
    grid: CubatureGrid | None = None,
    pair_cap: int = DEFAULT_PAIR_CAP,
) -> dict[str, np.ndarray]:
    """Columns ``d_radians``, ``abs_cor`` and ``weighted_product = |Cor| (1 + B^j d)^M``.

    The max of the last column is the empirical localisation constant.
    """
    if M < 1:
        raise InvalidArgument(f"decay exponent must be >= 1, got {M}")
    if grid is None:
        from .sphere_geom import grid_for_scale

        grid = grid_for_scale(j, profile.bandwidth)
    d, t = _reference_pairs(grid, pair_cap)
    cor = np.abs(correlation_function(spectrum, profile, j)(t))
    cor[d == 0.0] = 1.0
    product = cor * (1.0 + profile.bandwidth ** j * d) ** M
    order = np.argsort(d, kind="stable")
    return {"d_radians": d[order], "abs_cor": cor[order], "weighted_product": product[order]}


def nearest_points(grid: CubatureGrid, other: CubatureGrid, chunk: int = 2_000_000) -> np.ndarray:
    """Index into ``grid`` of the node nearest to each node of ``other``."""
    a = grid.vectors
    b = other.vectors
    out = np.empty(b.shape[0], dtype=int)
    rows = max(1, chunk // a.shape[0])
    for s in range(0, b.shape[0], rows):
        out[s : s + rows] = np.argmax(b[s : s + rows] @ a.T, axis=1)
    return out


def cross_scale_correlation_mc(
    spectrum: PowerSpectrum,
    profile: FilterProfile,
    scales,
    replicates: int,
    seed: int,
    workers: int = 1,
) -> dict:
    """Pooled co-located correlation of normalised coefficients between scales.

    For a pair ``j < j'`` each node of the finer grid is matched with the
    nearest node of the coarser grid; products ``beta_hat_j * beta_hat_j'``
    are pooled over nodes and replicates.  Both sides have known zero mean,
    so the moments are uncentred.
    """
    from .random_field import replicate_seed, sample_alm_batch
    from .sphere_geom import grid_for_scale
    from .statistics import _chunks, _map

    scales = sorted(int(j) for j in scales)
    grids = {j: grid_for_scale(j, profile.bandwidth) for j in scales}
    analyzers = {j: NeedletAnalyzer(profile, j, grids[j]) for j in scales}
    sigma = {j: np.sqrt(coeff_variance(spectrum, profile, j, grids[j])) for j in scales}
    spec = spectrum.truncated(max(a.l_hi for a in analyzers.values()))
    pairs = [(a, b) for i, a in enumerate(scales) for b in scales[i + 1 :]]
    match = {(a, b): nearest_points(grids[a], grids[b]) for a, b in pairs}

    def run(bounds):
        lo, hi = bounds
        alm = sample_alm_batch(spec, [replicate_seed(seed, i) for i in range(lo, hi)])
        bh = {j: analyzers[j].beta(alm) / sigma[j] for j in scales}
        out = {}
        for a, b in pairs:
            x = bh[a][:, match[a, b]]
            y = bh[b]
            out[a, b] = (np.sum(x * y, axis=1), np.sum(x * x, axis=1), np.sum(y * y, axis=1))
        return out

    parts = _map(run, _chunks(replicates, 20), workers)
    result = {}
    for a, b in pairs:
        xy = np.concatenate([p[a, b][0] for p in parts])
        xx = np.concatenate([p[a, b][1] for p in parts])
        yy = np.concatenate([p[a, b][2] for p in parts])
        result[a, b] = math.fsum(xy) / math.sqrt(math.fsum(xx) * math.fsum(yy))
    return result
