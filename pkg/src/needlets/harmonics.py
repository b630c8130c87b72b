"""Legendre kernels, spherical harmonics and grid transforms.

Conventions: complex orthonormal harmonics with the Condon-Shortley phase,

    Y_lm(theta, phi) = P_lm(cos theta) exp(i m phi),   Y_l,-m = (-1)^m conj(Y_lm),

where ``P_lm`` already carries the orthonormalisation factor.  Coefficient
arrays are stored as ``alm[l, m]`` for ``0 <= m <= l``; negative orders are
implied by the reality condition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidArgument, PreconditionError
from .sphere_geom import CubatureGrid, SpherePoint

L_MAX_CAP = 512
_RESCALE = 1e100
_LOG_RESCALE = math.log(_RESCALE)


def legendre_kernel(l: int, t):
    """``(2l + 1) / (4 pi) * P_l(t)``, the projector kernel onto degree ``l``."""
    if l < 0:
        raise InvalidArgument(f"degree must be nonnegative, got {l}")
    t = np.asarray(t, dtype=float)
    if np.any(np.abs(t) > 1.0 + 1e-12):
        raise InvalidArgument("Legendre argument outside [-1, 1]")
    t = np.clip(t, -1.0, 1.0)
    p_prev, p = np.ones_like(t), t.copy()
    if l == 0:
        p = p_prev
    for n in range(1, l):
        p_prev, p = p, ((2 * n + 1) * t * p - n * p_prev) / (n + 1)
    out = (2 * l + 1) / (4.0 * math.pi) * p
    return float(out) if out.ndim == 0 else out


def legendre_series(coeffs, t) -> np.ndarray:
    """``sum_l coeffs[l] * (2l + 1) / (4 pi) * P_l(t)`` by Clenshaw summation."""
    c = np.asarray(coeffs, dtype=float) * (2 * np.arange(len(coeffs)) + 1) / (4.0 * math.pi)
    t = np.clip(np.asarray(t, dtype=float), -1.0, 1.0)
    b1 = np.zeros_like(t)
    b2 = np.zeros_like(t)
    # P_{n+1} = ((2n+1) t P_n - n P_{n-1}) / (n+1)
    for n in range(len(c) - 1, 0, -1):
        alpha = (2 * n + 1) / (n + 1) * t
        beta = -(n + 1) / (n + 2)
        b1, b2 = c[n] + alpha * b1 + beta * b2, b1
    if len(c) == 0:
        return np.zeros_like(t)
    return c[0] + t * b1 - 0.5 * b2


def assoc_legendre_table(l_max: int, x) -> np.ndarray:
    """Orthonormalised associated Legendre values, shape ``(l_max+1, l_max+1, n)``.

    Entry ``[l, m]`` is ``P_lm(x)`` with ``|Y_lm| = |P_lm|``; entries with
    ``m > l`` are zero.  Each order ``m`` runs the usual three-term
    recurrence in ``l`` on values carried with a per-point log scale, which
    keeps the sectoral seeds ``sin(theta)**m`` from underflowing.
    """
    if l_max > L_MAX_CAP:
        raise InvalidArgument(f"l_max {l_max} exceeds cap {L_MAX_CAP}")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = x.size
    out = np.zeros((l_max + 1, l_max + 1, n))
    s = np.sqrt(np.maximum(0.0, 1.0 - x * x))
    with np.errstate(divide="ignore"):
        log_s = np.log(s)
    log_seed = -0.5 * math.log(4.0 * math.pi)
    for m in range(l_max + 1):
        if m > 0:
            log_seed += 0.5 * math.log((2 * m + 1) / (2 * m))
        if m == 0:
            scale = np.full(n, log_seed)
        else:
            scale = log_seed + m * log_s
        live = np.isfinite(scale)
        scale = np.where(live, scale, 0.0)
        p_prev = np.zeros(n)
        p = np.where(live, -1.0 if m % 2 else 1.0, 0.0)
        factor = np.exp(scale)
        out[m, m] = p * factor
        for l in range(m + 1, l_max + 1):
            a = math.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
            b = math.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1.0) ** 2 - 1.0))
            p_prev, p = p, a * (x * p - b * p_prev)
            big = np.abs(p) > _RESCALE
            if np.any(big):
                p = np.where(big, p / _RESCALE, p)
                p_prev = np.where(big, p_prev / _RESCALE, p_prev)
                scale = np.where(big, scale + _LOG_RESCALE, scale)
                factor = np.exp(scale)
            out[l, m] = p * factor
    return out


def _as_angles(points) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(points, CubatureGrid):
        return points.theta, points.phi
    if isinstance(points, SpherePoint):
        return np.array([points.theta]), np.array([points.phi])
    if isinstance(points, tuple) and len(points) == 2:
        return np.atleast_1d(np.asarray(points[0], float)), np.atleast_1d(np.asarray(points[1], float))
    pts = list(points)
    return np.array([p.theta for p in pts]), np.array([p.phi for p in pts])


def ylm(l: int, m: int, p):
    """Complex orthonormal spherical harmonic at a point (or points)."""
    if l < 0 or abs(m) > l:
        raise InvalidArgument(f"need 0 <= |m| <= l, got l={l}, m={m}")
    theta, phi = _as_angles(p)
    plm = assoc_legendre_table(l, np.cos(theta))[l, abs(m)]
    val = plm * np.exp(1j * abs(m) * phi)
    if m < 0:
        val = (-1) ** m * np.conj(val)
    return complex(val[0]) if isinstance(p, SpherePoint) else val


@dataclass(eq=False)
class HarmonicCoefficients:
    """Triangular array ``alm[l, m]``, ``0 <= m <= l <= l_max``."""

    alm: np.ndarray

    def __post_init__(self) -> None:
        alm = np.asarray(self.alm, dtype=complex)
        if alm.ndim != 2 or alm.shape[0] != alm.shape[1]:
            raise InvalidArgument("alm must be a square (l_max+1, l_max+1) array")
        self.alm = alm

    @property
    def l_max(self) -> int:
        return self.alm.shape[0] - 1

    @classmethod
    def zeros(cls, l_max: int) -> "HarmonicCoefficients":
        return cls(np.zeros((l_max + 1, l_max + 1), dtype=complex))

    @classmethod
    def from_full(cls, l_max: int, entries: dict) -> "HarmonicCoefficients":
        """Build from ``{(l, m): value}`` with any sign of ``m``, checking reality."""
        out = cls.zeros(l_max)
        for (l, m), v in entries.items():
            if abs(m) > l or l > l_max:
                raise InvalidArgument(f"invalid index ({l}, {m})")
            if m >= 0:
                out.alm[l, m] = v
        for (l, m), v in entries.items():
            if m < 0:
                expected = (-1) ** m * np.conj(out.alm[l, -m])
                if abs(v - expected) > 1e-12 * max(1.0, abs(v)):
                    raise InvalidArgument(f"a[{l},{m}] breaks a_l,-m = (-1)^m conj(a_lm)")
        out.validate()
        return out

    def get(self, l: int, m: int) -> complex:
        if m >= 0:
            return complex(self.alm[l, m])
        return complex((-1) ** m * np.conj(self.alm[l, -m]))

    def validate(self) -> None:
        upper = np.triu(self.alm, k=1)
        if np.any(upper != 0):
            raise InvalidArgument("alm has entries with m > l")
        if np.any(np.abs(self.alm[:, 0].imag) > 1e-12):
            raise InvalidArgument("a_l0 must be real")

    def truncated(self, l_max: int) -> "HarmonicCoefficients":
        out = HarmonicCoefficients.zeros(l_max)
        k = min(l_max, self.l_max) + 1
        out.alm[:k, :k] = self.alm[:k, :k]
        return out

    def save(self, path) -> None:
        rows = [f"# l_max = {self.l_max}", "l m re im"]
        for l in range(self.l_max + 1):
            for m in range(l + 1):
                a = self.alm[l, m]
                rows.append(f"{l} {m} {float(a.real)!r} {float(a.imag)!r}")
        Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "HarmonicCoefficients":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        l_max = int(lines[0].split("=")[1])
        out = cls.zeros(l_max)
        for line in lines[2:]:
            if line.strip():
                l, m, re, im = line.split()
                out.alm[int(l), int(m)] = complex(float(re), float(im))
        out.validate()
        return out


class RingBasis:
    """Legendre values on the rings of a product grid, reused across transforms."""

    def __init__(self, grid: CubatureGrid, l_max: int):
        self.grid = grid
        self.l_max = l_max
        # (rings, l, m)
        self.plm = np.moveaxis(assoc_legendre_table(l_max, np.cos(grid.ring_theta)), 2, 0)
        m = np.arange(l_max + 1)
        self.phase = np.exp(1j * np.outer(m, grid.lon))  # (m, lon)
        self.mult = np.where(m == 0, 1.0, 2.0)

    def synthesize(self, alm: np.ndarray) -> np.ndarray:
        """Real samples ``(..., rings * n_lon)`` from ``alm`` of shape ``(..., l, m)``."""
        alm = np.asarray(alm)[..., : self.l_max + 1, : self.l_max + 1]
        # F[..., r, m] = sum_l alm[..., l, m] P[r, l, m]
        F = np.einsum("...lm,rlm->...rm", alm, self.plm, optimize=True)
        F = F * self.mult
        vals = (F @ self.phase).real
        return vals.reshape(*vals.shape[:-2], -1)

    def analyze(self, values: np.ndarray) -> np.ndarray:
        g = self.grid
        vals = np.asarray(values, dtype=float).reshape(*np.shape(values)[:-1], g.n_rings, g.n_lon)
        # sum over longitudes of T exp(-i m phi)
        G = vals @ np.conj(self.phase).T * (2.0 * np.pi / g.n_lon)  # (..., r, m)
        G = G * g.ring_weights[:, None]
        alm = np.einsum("...rm,rlm->...lm", G, self.plm, optimize=True)
        alm[..., 0] = alm[..., 0].real
        return alm


def synthesize(coeffs: HarmonicCoefficients, points) -> np.ndarray:
    """Real field values ``T(x) = sum_lm a_lm Y_lm(x)``.

    Product grids use the ring decomposition; arbitrary points are
    processed in chunks with one Legendre table per chunk.
    """
    coeffs.validate()
    if isinstance(points, CubatureGrid):
        return RingBasis(points, coeffs.l_max).synthesize(coeffs.alm)
    theta, phi = _as_angles(points)
    out = np.empty(theta.size)
    L = coeffs.l_max
    m = np.arange(L + 1)
    mult = np.where(m == 0, 1.0, 2.0)
    chunk = max(1, 2_000_000 // ((L + 1) ** 2))
    for s in range(0, theta.size, chunk):
        sl = slice(s, s + chunk)
        P = assoc_legendre_table(L, np.cos(theta[sl]))  # (l, m, n)
        F = np.einsum("lm,lmn->mn", coeffs.alm, P) * mult[:, None]
        out[sl] = np.sum(F * np.exp(1j * np.outer(m, phi[sl])), axis=0).real
    return out


def analyze(values, grid: CubatureGrid, l_max: int) -> HarmonicCoefficients:
    """Cubature analysis ``a_lm = sum_k w_k T(x_k) conj(Y_lm(x_k))``."""
    if grid.degree < 2 * l_max:
        raise PreconditionError(f"grid degree {grid.degree} < 2 * l_max = {2 * l_max}")
    values = np.asarray(values, dtype=float)
    if values.shape[-1] != grid.point_count:
        raise InvalidArgument("field size does not match grid")
    return HarmonicCoefficients(RingBasis(grid, l_max).analyze(values))
