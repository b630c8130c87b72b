"""Sky masks and the sensitivity of needlet coefficients to unobserved regions.

The observed field is ``T~ = T + V`` with ``V = -T 1_G``: values inside the
mask ``G`` are zeroed.  Masked coefficients are obtained the way a map
pipeline would: re-analyse the masked samples up to the scale's top degree,
then apply the harmonic needlet formula.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DegenerateSpectrumError, InvalidArgument
from .filter_bank import FilterProfile
from .harmonics import RingBasis
from .needlet_transform import NeedletAnalyzer, coeff_variance
from .random_field import PowerSpectrum, covariance_function, replicate_seed, sample_alm_batch
from .sphere_geom import CubatureGrid, geodesic_distance, unit_vectors

MASK_FORMAT = "needlet-mask v1"


@dataclass(frozen=True)
class SkyMask:
    """Union of colatitude bands ``(theta1, theta2)`` and discs ``(theta, phi, radius)``."""

    bands: tuple[tuple[float, float], ...] = ()
    discs: tuple[tuple[float, float, float], ...] = ()
    full: bool = False

    def __post_init__(self) -> None:
        for t1, t2 in self.bands:
            if not 0.0 <= t1 <= t2 <= math.pi:
                raise InvalidArgument(f"band ({t1}, {t2}) is not a colatitude interval")
        for th, _, r in self.discs:
            if not 0.0 <= th <= math.pi or r < 0.0:
                raise InvalidArgument("disc centre colatitude must lie in [0, pi] and radius be >= 0")

    @classmethod
    def empty(cls) -> "SkyMask":
        return cls()

    @classmethod
    def everything(cls) -> "SkyMask":
        return cls(full=True)

    def contains(self, theta, phi) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        phi = np.asarray(phi, dtype=float)
        if self.full:
            return np.ones(theta.shape, dtype=bool)
        inside = np.zeros(theta.shape, dtype=bool)
        for t1, t2 in self.bands:
            inside |= (theta >= t1) & (theta <= t2)
        if self.discs:
            v = unit_vectors(theta, phi)
            for th, ph, r in self.discs:
                inside |= geodesic_distance(v, unit_vectors(th, ph)) <= r
        return inside

    def rasterize(self, grid: CubatureGrid) -> np.ndarray:
        """Boolean per grid point, ``True`` where unobserved."""
        return self.contains(grid.theta, grid.phi)

    def save(self, path) -> None:
        lines = [f"# {MASK_FORMAT}", "# angles in radians"]
        if self.full:
            lines.append("full")
        lines += [f"band {float(t1)!r} {float(t2)!r}" for t1, t2 in self.bands]
        lines += [f"disc {float(th)!r} {float(ph)!r} {float(r)!r}" for th, ph, r in self.discs]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "SkyMask":
        bands, discs, full = [], [], False
        for raw in Path(path).read_text(encoding="utf-8").splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            kind, *vals = line.split()
            if kind == "full":
                full = True
            elif kind == "band":
                bands.append(tuple(float(v) for v in vals))
            elif kind == "disc":
                discs.append(tuple(float(v) for v in vals))
            else:
                raise InvalidArgument(f"{path}: unknown mask entry {kind!r}")
        return cls(tuple(bands), tuple(discs), full)


def masked_fraction(mask_raster: np.ndarray, grid: CubatureGrid) -> float:
    """Cubature estimate of the masked area over ``4 pi``."""
    return float(np.sum(grid.weights[np.asarray(mask_raster, bool)]) / (4.0 * math.pi))


def apply_mask(values, mask_raster) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    mask_raster = np.asarray(mask_raster, dtype=bool)
    if values.shape[-1] != mask_raster.shape[-1]:
        raise InvalidArgument("mask raster and field live on different grids")
    return np.where(mask_raster, 0.0, values)


def clearance(grid: CubatureGrid, mask_raster, chunk: int = 2_000_000) -> np.ndarray:
    """Geodesic distance from each grid point to the nearest masked point."""
    mask_raster = np.asarray(mask_raster, dtype=bool)
    vec = grid.vectors
    masked = vec[mask_raster]
    out = np.full(grid.point_count, np.inf)
    if masked.shape[0] == 0:
        return out
    rows = max(1, chunk // masked.shape[0])
    for s in range(0, grid.point_count, rows):
        d = geodesic_distance(vec[s : s + rows, None, :], masked[None, :, :])
        out[s : s + rows] = d.min(axis=1)
    out[mask_raster] = 0.0
    return out


class MaskedAnalyzer:
    """Coefficients of masked grid samples at one scale."""

    def __init__(self, profile: FilterProfile, j: int, grid: CubatureGrid):
        self.needlets = NeedletAnalyzer(profile, j, grid)
        self.l_max = self.needlets.l_hi
        self._basis = RingBasis(grid, self.l_max)

    def beta(self, masked_values) -> np.ndarray:
        alm = self._basis.analyze(masked_values)
        return self.needlets.beta(alm)


def masked_coeffs(masked_field, profile: FilterProfile, j: int, grid: CubatureGrid) -> np.ndarray:
    return MaskedAnalyzer(profile, j, grid).beta(masked_field)


def discrepancy(beta, beta_tilde, sigma2) -> tuple[np.ndarray, np.ndarray]:
    """Monte Carlo ``E[(beta - beta~)^2] / E[beta^2]`` and its standard error.

    ``beta`` and ``beta_tilde`` have shape ``(replicates, points)``; the
    denominator is the model variance.
    """
    beta = np.asarray(beta, dtype=float)
    beta_tilde = np.asarray(beta_tilde, dtype=float)
    sigma2 = np.asarray(sigma2, dtype=float)
    if beta.ndim != 2 or beta.shape != beta_tilde.shape:
        raise InvalidArgument("beta arrays must share shape (replicates, points)")
    if beta.shape[0] < 50:
        raise InvalidArgument("discrepancy needs at least 50 replicates")
    if np.any(sigma2 <= 0.0):
        raise DegenerateSpectrumError("model variance must be positive")
    sq = (beta - beta_tilde) ** 2
    n = sq.shape[0]
    return sq.mean(axis=0) / sigma2, sq.std(axis=0, ddof=1) / math.sqrt(n) / sigma2


def mask_gap_bound(C_M: float, V_star: float, B: float, j: int, eps: float, M: float, beta_var: float | None = None) -> float:
    """``C_M 4 pi sqrt(2 V*) B^j / (1 + B^j eps)^M``.

    With ``beta_var`` the bound is divided by ``sqrt(beta_var)``, giving the
    relative form compared against ``sqrt(D)``.
    """
    if V_star < 0 or eps <= 0 or M < 1:
        raise InvalidArgument("need V* >= 0, eps > 0, M >= 1")
    bound = C_M * 4.0 * math.pi * math.sqrt(2.0 * V_star) * B ** j / (1.0 + B ** j * eps) ** M
    if beta_var is not None:
        bound /= math.sqrt(beta_var)
    return bound


def calibrate_cm(rms_gap, eps, V_star: float, B: float, j: int, M: float) -> float:
    """Smallest ``C_M`` making the bound hold at every point with ``eps > 0``."""
    rms_gap = np.asarray(rms_gap, dtype=float)
    eps = np.asarray(eps, dtype=float)
    ok = (eps > 0) & np.isfinite(eps)
    unit = np.array([mask_gap_bound(1.0, V_star, B, j, e, M) for e in eps[ok]])
    return float(np.max(rms_gap[ok] / unit)) if unit.size else 0.0


@dataclass
class MaskExperiment:
    j: int
    grid: CubatureGrid
    mask_raster: np.ndarray
    D: np.ndarray
    D_se: np.ndarray
    eps: np.ndarray
    rms_gap: np.ndarray
    sigma2: np.ndarray
    V_star: float
    replicates: int
    seed: int
    pooled: np.ndarray | None = None
    threshold: float = 0.1
    meta: dict = field(default_factory=dict)

    def pooled_D(self) -> tuple[float, float]:
        """Spatial mean of ``D`` with a standard error over replicates."""
        n = self.pooled.size
        return float(self.pooled.mean()), float(self.pooled.std(ddof=1) / math.sqrt(n))

    @property
    def flagged(self) -> np.ndarray:
        return self.D > self.threshold

    def table_rows(self):
        for t, p, d, se, f in zip(self.grid.theta, self.grid.phi, self.D, self.D_se, self.flagged):
            yield t, p, d, se, int(f)


def run_mask_experiment(
    spectrum: PowerSpectrum,
    profile: FilterProfile,
    j: int,
    mask: SkyMask,
    replicates: int,
    seed: int,
    grid: CubatureGrid | None = None,
    workers: int = 1,
    chunk: int = 25,
    threshold: float = 0.1,
) -> MaskExperiment:
    """Simulate full and masked coefficients and estimate ``D`` per point."""
    from .sphere_geom import grid_for_scale
    from .statistics import _chunks, _map

    grid = grid if grid is not None else grid_for_scale(j, profile.bandwidth)
    analyzer = MaskedAnalyzer(profile, j, grid)
    l_hi = analyzer.l_max
    spec = spectrum.truncated(l_hi)
    synth = RingBasis(grid, l_hi)
    raster = mask.rasterize(grid)
    sigma2 = coeff_variance(spectrum, profile, j, grid)

    def run(bounds):
        lo, hi = bounds
        alm = sample_alm_batch(spec, [replicate_seed(seed, i) for i in range(lo, hi)])
        beta = analyzer.needlets.beta(alm)
        field_vals = synth.synthesize(alm)
        beta_tilde = analyzer.beta(apply_mask(field_vals, raster))
        return beta, beta_tilde

    parts = _map(run, _chunks(replicates, chunk), workers)
    beta = np.concatenate([p[0] for p in parts])
    beta_tilde = np.concatenate([p[1] for p in parts])
    D, se = discrepancy(beta, beta_tilde, sigma2)
    rms = np.sqrt(np.mean((beta - beta_tilde) ** 2, axis=0))
    pooled = np.mean((beta - beta_tilde) ** 2 / sigma2, axis=1)
    V_star = float(covariance_function(spec, 1.0)) if raster.any() else 0.0
    return MaskExperiment(
        j, grid, raster, D, se, clearance(grid, raster), rms, sigma2, V_star, replicates, seed, pooled, threshold
    )


def binned_profile(eps, D, D_se, n_bins: int = 8, max_eps: float | None = None):
    """Mean ``D`` and its standard error in clearance bins (``eps > 0`` only)."""
    eps = np.asarray(eps, dtype=float)
    ok = np.isfinite(eps) & (eps > 0)
    top = max_eps if max_eps is not None else float(eps[ok].max())
    edges = np.linspace(0.0, top, n_bins + 1)
    means, ses, centers = [], [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        sel = ok & (eps > lo) & (eps <= hi)
        if not np.any(sel):
            continue
        means.append(float(np.mean(D[sel])))
        ses.append(float(np.sqrt(np.sum(D_se[sel] ** 2)) / sel.sum()))
        centers.append(0.5 * (lo + hi))
    return np.array(centers), np.array(means), np.array(ses)


def count_inversions(means, ses) -> int:
    """Increases between consecutive bins exceeding the combined standard error."""
    inv = 0
    for i in range(1, len(means)):
        if means[i] - means[i - 1] > math.hypot(ses[i], ses[i - 1]):
            inv += 1
    return inv
