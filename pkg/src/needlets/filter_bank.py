"""Littlewood-Paley windows for needlet construction.

The smooth cut-off ``phi`` equals 1 on ``[0, 1/B]`` and 0 beyond 1, and
the band-pass window is ``b(xi) = sqrt(phi(xi / B) - phi(xi))``.  The
transition of ``phi`` is an integrated, normalised bump

    f(t) = exp(-1 / (1 - t**2)),   psi(u) = int_{-1}^u f / int_{-1}^1 f,

tabulated once on a uniform grid of ``[-1, 1]`` and interpolated with a
monotone cubic.  Because ``b**2`` is a difference of dilates of ``phi``,
``sum_j b(xi / B**j)**2`` telescopes to 1 for ``|xi| >= 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.interpolate import PchipInterpolator

from .errors import ConsistencyError, InvalidArgument

DEFAULT_RESOLUTION = 4096
MIN_RESOLUTION = 16
CLAMP_TOL = 1e-12
PROFILE_FORMAT = "needlet-profile v1"


def _bump(t: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - t[inside] ** 2))
    return out


def build_bump_table(resolution: int = DEFAULT_RESOLUTION) -> np.ndarray:
    """Values of the normalised integrated bump on ``linspace(-1, 1, resolution)``.

    The cumulative integral uses composite Simpson on the table grid.  The
    table is symmetrised as ``(c(u) + 1 - c(-u)) / 2`` so that the odd
    symmetry ``psi(-u) = 1 - psi(u)`` holds to rounding.
    """
    if int(resolution) != resolution or resolution < MIN_RESOLUTION:
        raise InvalidArgument(f"bump table resolution must be an integer >= {MIN_RESOLUTION}, got {resolution}")
    u = np.linspace(-1.0, 1.0, int(resolution))
    c = cumulative_simpson(_bump(u), x=u, initial=0.0)
    c /= c[-1]
    table = 0.5 * (c + 1.0 - c[::-1])
    table[0], table[-1] = 0.0, 1.0
    # rounding can leave 1-ulp dips on the flat ends
    return np.maximum.accumulate(np.clip(table, 0.0, 1.0))


@dataclass(frozen=True, eq=False)
class FilterProfile:
    """Window pair ``(phi, b)`` for bandwidth ``B``.

    Immutable after construction; ``window_weights`` results are memoised
    per ``(j, l_max)`` on the instance.
    """

    bandwidth: float
    transition_table: np.ndarray
    resolution: int
    _psi: PchipInterpolator = field(init=False, repr=False)
    _cache: dict = field(init=False, repr=False, default_factory=dict)

    def __post_init__(self) -> None:
        table = np.array(self.transition_table, dtype=float)
        table.setflags(write=False)
        object.__setattr__(self, "transition_table", table)
        u = np.linspace(-1.0, 1.0, self.resolution)
        object.__setattr__(self, "_psi", PchipInterpolator(u, table, extrapolate=False))

    @property
    def B(self) -> float:
        return self.bandwidth

    def psi(self, u):
        """Interpolated integrated bump on ``[-1, 1]``."""
        u = np.clip(np.asarray(u, dtype=float), -1.0, 1.0)
        return self._psi(u)

    def phi(self, xi):
        """Smooth cut-off: 1 for ``|xi| <= 1/B``, 0 for ``|xi| >= 1``."""
        x = np.abs(np.asarray(xi, dtype=float))
        inv_b = 1.0 / self.bandwidth
        out = np.where(x <= inv_b, 1.0, 0.0)
        mid = (x > inv_b) & (x < 1.0)
        if np.any(mid):
            # linear map of [1/B, 1] onto [1, -1]
            u = 1.0 - 2.0 * (x[mid] - inv_b) / (1.0 - inv_b)
            out = np.array(out, dtype=float)
            out[mid] = self.psi(u)
        return out if out.ndim else float(out)

    def b_squared(self, xi):
        """Unclamped ``phi(xi / B) - phi(xi)``."""
        xi = np.asarray(xi, dtype=float)
        return np.asarray(self.phi(xi / self.bandwidth)) - np.asarray(self.phi(xi))


def build_profile(B: float, resolution: int = DEFAULT_RESOLUTION) -> FilterProfile:
    if not np.isfinite(B) or B <= 1.0:
        raise InvalidArgument(f"bandwidth B must satisfy B > 1, got {B}")
    return FilterProfile(float(B), build_bump_table(resolution), int(resolution))


def eval_b(profile: FilterProfile, xi):
    """Band-pass window ``b(xi)``; accepts scalars or arrays."""
    if not np.all(np.isfinite(np.asarray(xi, dtype=float))):
        raise InvalidArgument("xi must be finite")
    d = np.asarray(profile.b_squared(xi), dtype=float)
    if np.any(d < -CLAMP_TOL):
        worst = float(d.min())
        raise ConsistencyError(f"b^2 = {worst:.3e} < 0: window table is not monotone")
    out = np.sqrt(np.maximum(d, 0.0))
    return out if out.ndim else float(out)


def support(profile: FilterProfile, j: int) -> tuple[int, int]:
    """Smallest and largest integer degree where ``b(l / B**j)`` can be nonzero."""
    B = profile.bandwidth
    lo = int(np.floor(B ** (j - 1))) + 1
    hi = int(np.ceil(B ** (j + 1))) - 1
    return max(lo, 0), hi


def window_weights(profile: FilterProfile, j: int, l_max: int) -> np.ndarray:
    """Read-only vector ``b(l / B**j)`` for ``l = 0..l_max``."""
    if j < 0 or int(j) != j:
        raise InvalidArgument(f"scale index must be a nonnegative integer, got {j}")
    if l_max < 1:
        raise InvalidArgument(f"l_max must be >= 1, got {l_max}")
    key = (int(j), int(l_max))
    cached = profile._cache.get(key)
    if cached is not None:
        return cached
    ell = np.arange(l_max + 1, dtype=float)
    w = np.asarray(eval_b(profile, ell / profile.bandwidth ** j), dtype=float)
    w.setflags(write=False)
    profile._cache[key] = w
    return w


def partition_of_unity_error(profile: FilterProfile, l_max: int) -> float:
    """Max over ``1 <= l <= l_max`` of ``|sum_j b(l / B**j)**2 - 1|``."""
    B = profile.bandwidth
    ell = np.arange(1, l_max + 1, dtype=float)
    total = np.zeros_like(ell)
    j = 0
    while B ** (j - 1) <= l_max:
        total += np.asarray(eval_b(profile, ell / B ** j)) ** 2
        j += 1
    return float(np.max(np.abs(total - 1.0)))


def save_profile(profile: FilterProfile, path) -> None:
    lines = [
        f"# {PROFILE_FORMAT}",
        f"B = {profile.bandwidth!r}",
        f"resolution = {profile.resolution}",
    ]
    lines += [repr(float(v)) for v in profile.transition_table]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_profile(path) -> FilterProfile:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != f"# {PROFILE_FORMAT}":
        raise InvalidArgument(f"{path}: not a {PROFILE_FORMAT} file")
    header = {}
    for line in lines[1:3]:
        key, _, value = line.partition("=")
        header[key.strip()] = value.strip()
    B = float(header["B"])
    resolution = int(header["resolution"])
    table = np.array([float(v) for v in lines[3:] if v.strip()])
    if table.size != resolution:
        raise InvalidArgument(f"{path}: expected {resolution} samples, found {table.size}")
    if B <= 1.0:
        raise InvalidArgument(f"{path}: B must exceed 1")
    return FilterProfile(B, table, resolution)
