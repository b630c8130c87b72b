"""Hermite functionals of normalised needlet coefficients and the KS-type test.

For weights ``w[u, q]`` the scale-``j`` statistics are

    h_u = (1 / N_j) sum_k sum_q w[u, q] H_q(beta_hat_k),   N_j^2 = #points,

with probabilists' Hermite polynomials ``H_q``.  Their covariance follows
from ``E[H_q(X) H_p(Y)] = delta_pq q! rho^q`` for standard Gaussians with
correlation ``rho``:

    Omega[u, v] = (1 / N_j^2) sum_q q! w[u, q] w[v, q] sum_{k, k'} gamma_kk'^q.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import ndtr

from .errors import AssumptionViolation, InvalidArgument
from .filter_bank import FilterProfile
from .needlet_transform import NeedletAnalyzer, NeedletCoefficients, coeff_variance, gamma_power_sums
from .random_field import PowerSpectrum, replicate_seed, sample_alm_batch
from .sphere_geom import CubatureGrid, grid_for_scale

MAX_HERMITE_ORDER = 30
CONDITION_LIMIT = 1e8
EIGEN_FLOOR = 1e-12


def hermite(q: int, x):
    """Probabilists' Hermite polynomial ``He_q(x)``."""
    if int(q) != q or not 0 <= q <= MAX_HERMITE_ORDER:
        raise InvalidArgument(f"Hermite order must be in [0, {MAX_HERMITE_ORDER}], got {q}")
    x = np.asarray(x, dtype=float)
    h_prev, h = np.ones_like(x), x.copy()
    if q == 0:
        h = h_prev
    for n in range(1, int(q)):
        h_prev, h = h, x * h - n * h_prev
    return float(h) if h.ndim == 0 else h


@dataclass(frozen=True, eq=False)
class HermiteWeights:
    """``w[u, q - 1]`` is the weight of ``H_q`` in statistic ``u``."""

    w: np.ndarray
    names: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        w = np.atleast_2d(np.array(self.w, dtype=float))
        if w.shape[1] > MAX_HERMITE_ORDER:
            raise InvalidArgument("Hermite order above supported maximum")
        if np.any(np.all(w == 0, axis=1)):
            raise InvalidArgument("every statistic needs a nonzero weight")
        if w.shape[0] > 1 and np.linalg.matrix_rank(w) < w.shape[0]:
            raise InvalidArgument("weight rows must be linearly independent")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)

    @property
    def U(self) -> int:
        return self.w.shape[0]

    @property
    def Q(self) -> int:
        return self.w.shape[1]

    def weight(self, u: int, q: int) -> float:
        """1-based ``w_{uq}``."""
        return float(self.w[u - 1, q - 1]) if 1 <= q <= self.Q else 0.0


def gof_presets() -> HermiteWeights:
    """Variance, skewness and kurtosis functionals.

    Rows: ``H_2``, ``H_3 + 3 H_1`` (= x^3), ``H_4 + 6 H_2`` (= x^4 - 3).
    """
    w = np.array(
        [
            [0.0, 1.0, 0.0, 0.0],
            [3.0, 0.0, 1.0, 0.0],
            [0.0, 6.0, 0.0, 1.0],
        ]
    )
    return HermiteWeights(w, ("h1", "h2", "h3"))


def hermite_functional(weights: HermiteWeights, x) -> np.ndarray:
    """``sum_q w[u, q] H_q(x)`` for every row ``u``; result shape ``(U, *x.shape)``."""
    x = np.asarray(x, dtype=float)
    out = np.zeros((weights.U,) + x.shape)
    h_prev, h = np.ones_like(x), x
    for q in range(1, weights.Q + 1):
        if q > 1:
            h_prev, h = h, x * h - (q - 1) * h_prev
        col = weights.w[:, q - 1]
        for u in np.nonzero(col)[0]:
            out[u] += col[u] * h
    return out


def h_statistics(beta_hat, weights: HermiteWeights) -> np.ndarray:
    """All ``h_u`` for normalised coefficients ``(..., N^2)``; shape ``(..., U)``."""
    beta_hat = np.asarray(beta_hat, dtype=float)
    n_points = beta_hat.shape[-1]
    vals = hermite_functional(weights, beta_hat).sum(axis=-1) / math.sqrt(n_points)
    return np.moveaxis(vals, 0, -1)


def h_statistic(coeffs, weights: HermiteWeights, u: int) -> float:
    """Single statistic ``h_u`` (``u`` is 1-based)."""
    bh = coeffs.beta_hat if isinstance(coeffs, NeedletCoefficients) else np.asarray(coeffs, float)
    if not 1 <= u <= weights.U:
        raise InvalidArgument(f"statistic index {u} outside 1..{weights.U}")
    return float(h_statistics(bh, weights)[u - 1])


def power_sums(gamma: np.ndarray, powers) -> dict[int, float]:
    gamma = np.asarray(gamma, dtype=float)
    return {q: math.fsum((gamma ** q).ravel()) for q in powers}


def _check_gamma(gamma: np.ndarray) -> None:
    if gamma.ndim != 2 or gamma.shape[0] != gamma.shape[1]:
        raise InvalidArgument("gamma must be square")
    if not np.allclose(gamma, gamma.T, atol=1e-12):
        raise InvalidArgument("gamma must be symmetric")
    if not np.allclose(np.diag(gamma), 1.0, atol=1e-12):
        raise InvalidArgument("gamma must have unit diagonal")


def omega_from_power_sums(sums: dict[int, float], n_points: int, weights: HermiteWeights, check: bool = True) -> np.ndarray:
    U = weights.U
    omega = np.zeros((U, U))
    for q in range(1, weights.Q + 1):
        col = weights.w[:, q - 1]
        if not np.any(col):
            continue
        omega += math.factorial(q) * np.outer(col, col) * sums[q]
    omega /= n_points
    if check:
        check_invertible(omega)
    return omega


def omega_matrix(gamma, weights: HermiteWeights, check: bool = True) -> np.ndarray:
    """``Omega_j`` from the pairwise correlation matrix of ``beta_hat``."""
    gamma = np.asarray(gamma, dtype=float)
    _check_gamma(gamma)
    sums = power_sums(gamma, range(1, weights.Q + 1))
    return omega_from_power_sums(sums, gamma.shape[0], weights, check)


def omega_gof_closed_form(sums: dict[int, float], n_points: int) -> np.ndarray:
    """Entries of ``Omega_j`` for the (h1, h2, h3) preset written out term by term."""
    s1, s2, s3, s4 = (sums[q] / n_points for q in (1, 2, 3, 4))
    o11 = 2 * s2
    o22 = 6 * s3 + 9 * s1
    o33 = 24 * s4 + 72 * s2
    o13 = 12 * s2
    return np.array([[o11, 0.0, o13], [0.0, o22, 0.0], [o13, 0.0, o33]])


def check_invertible(omega: np.ndarray) -> None:
    if not np.allclose(omega, omega.T, rtol=1e-10, atol=0.0):
        raise AssumptionViolation("Omega_j is not symmetric")
    ev = np.linalg.eigvalsh(omega)
    if ev[0] <= EIGEN_FLOOR * max(1.0, ev[-1]) or ev[-1] / ev[0] > CONDITION_LIMIT:
        raise AssumptionViolation(f"Omega_j is not safely invertible (eigenvalues {ev[0]:.3e} .. {ev[-1]:.3e})")


def inverse_sqrt(omega: np.ndarray) -> np.ndarray:
    """Symmetric ``Omega^{-1/2}``."""
    check_invertible(omega)
    ev, vec = np.linalg.eigh(omega)
    return (vec / np.sqrt(ev)) @ vec.T


def scale_omega(spectrum: PowerSpectrum, profile: FilterProfile, j: int, grid: CubatureGrid, weights: HermiteWeights) -> np.ndarray:
    """``Omega_j`` from the model correlations at scale ``j``."""
    sums = gamma_power_sums(spectrum, profile, j, grid, powers=range(1, weights.Q + 1))
    return omega_from_power_sums(sums, grid.point_count, weights)


def even_ladder(J: int, start: int = 2) -> list[int]:
    """Scales ``start, start + 2, ... <= J``."""
    return list(range(start, J + 1, 2))


def wj_path(standardized, scales=None) -> np.ndarray:
    """Partial-sum path ``W(i / m) = m^{-1/2} sum_{i' <= i} v_{i'}``, with ``W(0) = 0``.

    ``standardized`` is either a sequence of vectors in ladder order or a
    mapping ``scale -> vector``; with a mapping, ``scales`` lists the ladder
    and every listed scale must be present.
    """
    if isinstance(standardized, dict):
        if scales is None:
            scales = sorted(standardized)
        missing = [j for j in scales if j not in standardized]
        if missing:
            raise InvalidArgument(f"missing scales in ladder: {missing}")
        vecs = [np.atleast_1d(np.asarray(standardized[j], float)) for j in scales]
    else:
        vecs = [np.atleast_1d(np.asarray(v, float)) for v in standardized]
    if not vecs:
        raise InvalidArgument("empty scale ladder")
    arr = np.stack(vecs)
    path = np.vstack([np.zeros((1, arr.shape[1])), np.cumsum(arr, axis=0)]) / math.sqrt(arr.shape[0])
    return path


def sup_abs_bm_sf(t):
    """``P(sup_{[0,1]} |X| > t)`` for standard Brownian motion ``X``.

    For ``t >= 1`` the reflection series
    ``1 - sum_{k in Z} (-1)^k [Phi((2k+1)t) - Phi((2k-1)t)]`` is used; below that
    the theta-function form
    ``1 - (4/pi) sum_k (-1)^k / (2k+1) exp(-(2k+1)^2 pi^2 / (8 t^2))``,
    which converges quickly for small ``t``.  Twenty terms give machine
    precision on each branch.
    """
    t = np.asarray(t, dtype=float)
    out = np.ones_like(t)
    k = np.arange(20)[:, None]
    big = t >= 1.0
    tb = t[big][None, :]
    mult = np.where(k == 0, 1.0, 2.0)
    inside = np.sum(mult * (-1.0) ** k * (ndtr((2 * k + 1) * tb) - ndtr((2 * k - 1) * tb)), axis=0)
    out[big] = 1.0 - inside
    small = (t > 0) & ~big
    ts = t[small][None, :]
    odd = 2 * k + 1
    cdf = 4.0 / math.pi * np.sum((-1.0) ** k / odd * np.exp(-(odd ** 2) * math.pi ** 2 / (8.0 * ts ** 2)), axis=0)
    out[small] = 1.0 - cdf
    out = np.clip(out, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


@lru_cache(maxsize=64)
def ks_threshold(level: float) -> float:
    """``t`` with ``P(sup |X| > t) = level``."""
    from scipy.optimize import brentq

    if not 0.0 < level < 1.0:
        raise InvalidArgument("level must lie in (0, 1)")
    return float(brentq(lambda t: sup_abs_bm_sf(t) - level, 1e-6, 10.0, xtol=1e-12))


def ks_test(path) -> tuple[float, float]:
    """``(sup_r |W(r)|, p-value)`` for a scalar path."""
    path = np.asarray(path, dtype=float).ravel()
    if path.size == 0:
        raise InvalidArgument("empty path")
    stat = float(np.max(np.abs(path)))
    return stat, float(sup_abs_bm_sf(stat))


@dataclass
class StatisticsReport:
    scales: list[int]
    h: dict[int, np.ndarray]
    omega: dict[int, np.ndarray]
    path: np.ndarray
    ks_statistic: float
    p_value: float
    threshold: float
    level: float
    reject: bool
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "scales": list(self.scales),
            "h": {str(j): self.h[j].tolist() for j in self.scales},
            "omega": {str(j): self.omega[j].tolist() for j in self.scales},
            "path": self.path.tolist(),
            "ks_statistic": self.ks_statistic,
            "p_value": self.p_value,
            "threshold": self.threshold,
            "level": self.level,
            "reject": self.reject,
            "metadata": self.metadata,
        }


class ScaleModel:
    """Per-scale grid, analyzer, model variances and standardisation."""

    def __init__(self, spectrum: PowerSpectrum, profile: FilterProfile, j: int, weights: HermiteWeights, grid=None):
        self.j = j
        self.grid = grid if grid is not None else grid_for_scale(j, profile.bandwidth)
        self.analyzer = NeedletAnalyzer(profile, j, self.grid)
        self.sigma = np.sqrt(coeff_variance(spectrum, profile, j, self.grid))
        self.weights = weights
        self.omega = scale_omega(spectrum, profile, j, self.grid, weights)
        self.omega_isqrt = inverse_sqrt(self.omega)

    def h(self, alm: np.ndarray) -> np.ndarray:
        return h_statistics(self.analyzer.beta(alm) / self.sigma, self.weights)

    def standardized(self, alm: np.ndarray) -> np.ndarray:
        return self.h(alm) @ self.omega_isqrt.T


def _chunks(n: int, size: int):
    return [(s, min(n, s + size)) for s in range(0, n, size)]


def simulate_h(
    spectrum: PowerSpectrum,
    models: list[ScaleModel],
    replicates: int,
    seed: int,
    workers: int = 1,
    chunk: int = 100,
) -> dict[int, np.ndarray]:
    """Raw ``h`` vectors per scale for ``replicates`` independent fields.

    Replicate ``i`` always uses ``replicate_seed(seed, i)``; chunks are
    evaluated independently and concatenated in order, so the output is
    identical for every worker count.
    """
    # per-degree streams: truncating the spectrum leaves lower degrees unchanged
    needed = spectrum.truncated(max(m.analyzer.l_hi for m in models))

    def run(bounds):
        lo, hi = bounds
        alm = sample_alm_batch(needed, [replicate_seed(seed, i) for i in range(lo, hi)])
        return {m.j: m.h(alm) for m in models}

    parts = _map(run, _chunks(replicates, chunk), workers)
    return {m.j: np.concatenate([p[m.j] for p in parts]) for m in models}


def _map(fn, items, workers: int):
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _sample_skew_kurt(x: np.ndarray) -> tuple[float, float]:
    z = x - x.mean()
    m2 = np.mean(z ** 2)
    return float(np.mean(z ** 3) / m2 ** 1.5), float(np.mean(z ** 4) / m2 ** 2 - 3.0)


def mc_moment_oracle(
    spectrum: PowerSpectrum,
    profile: FilterProfile,
    j: int,
    weights: HermiteWeights,
    replicates: int,
    seed: int,
    workers: int = 1,
    grid=None,
) -> dict:
    """Empirical moments of the ``h`` statistics at scale ``j``.

    Second moments are raw (``E[h_u h_v]``), matching the definition of
    ``Omega_j``; standard errors are ``std(h_u h_v) / sqrt(n)``.
    """
    if replicates < 100:
        raise InvalidArgument("the moment oracle needs at least 100 replicates")
    model = ScaleModel(spectrum, profile, j, weights, grid)
    h = simulate_h(spectrum, [model], replicates, seed, workers)[j]
    n = h.shape[0]
    prod = h[:, :, None] * h[:, None, :]
    z = h @ model.omega_isqrt.T
    skew, kurt = zip(*(_sample_skew_kurt(z[:, u]) for u in range(weights.U)))
    return {
        "replicates": n,
        "seed": seed,
        "h": h,
        "standardized": z,
        "mean": h.mean(axis=0),
        "mean_se": h.std(axis=0, ddof=1) / math.sqrt(n),
        "second_moment": prod.mean(axis=0),
        "second_moment_se": prod.std(axis=0, ddof=1) / math.sqrt(n),
        "skewness": np.array(skew),
        "excess_kurtosis": np.array(kurt),
        "omega": model.omega,
        "N": model.grid.N,
    }


def gof_test(
    spectrum: PowerSpectrum,
    alm: np.ndarray,
    models: list[ScaleModel],
    level: float = 0.05,
    component: int = 0,
) -> StatisticsReport:
    """KS-type test on one component of the standardised partial-sum path."""
    scales = [m.j for m in models]
    h = {m.j: m.h(alm) for m in models}
    std = {m.j: h[m.j] @ m.omega_isqrt.T for m in models}
    path = wj_path(std, scales)
    stat, p = ks_test(path[:, component])
    t = ks_threshold(level)
    return StatisticsReport(
        scales=scales,
        h=h,
        omega={m.j: m.omega for m in models},
        path=path,
        ks_statistic=stat,
        p_value=p,
        threshold=t,
        level=level,
        reject=bool(stat > t),
    )
