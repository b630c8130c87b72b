"""Angular power spectra and Gaussian isotropic field simulation.

Each degree ``l`` draws from its own Philox stream keyed by
``(seed, l)``, so a realisation does not depend on how degrees are
partitioned or in which order they are generated.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidArgument, PreconditionError
from .harmonics import HarmonicCoefficients, RingBasis, legendre_series
from .sphere_geom import CubatureGrid


@dataclass(eq=False)
class PowerSpectrum:
    cl: np.ndarray
    alpha: float | None = None
    amplitude: float | None = None
    c1: float | None = None
    c2: float | None = None
    compliant: bool = False
    label: str = ""

    def __post_init__(self) -> None:
        cl = np.array(self.cl, dtype=float)
        if cl.ndim != 1 or cl.size < 2:
            raise InvalidArgument("spectrum needs C_l for at least l = 0, 1")
        if np.any(cl < 0) or not np.all(np.isfinite(cl)):
            raise InvalidArgument("C_l must be finite and nonnegative")
        if cl[0] != 0.0:
            raise InvalidArgument("C_0 must vanish for a centred field")
        cl.setflags(write=False)
        self.cl = cl
        if self.compliant:
            if not envelope_holds(self.cl, self.alpha, self.c1, self.c2):
                raise InvalidArgument("spectrum violates c1 l^-alpha <= C_l <= c2 l^-alpha")

    @property
    def l_max(self) -> int:
        return self.cl.size - 1

    def scaled(self, factor: float) -> "PowerSpectrum":
        c1 = None if self.c1 is None else self.c1 * factor
        c2 = None if self.c2 is None else self.c2 * factor
        amp = None if self.amplitude is None else self.amplitude * factor
        return PowerSpectrum(self.cl * factor, self.alpha, amp, c1, c2, self.compliant, self.label)

    def truncated(self, l_max: int) -> "PowerSpectrum":
        cl = np.zeros(l_max + 1)
        k = min(l_max, self.l_max) + 1
        cl[:k] = self.cl[:k]
        return PowerSpectrum(cl, self.alpha, self.amplitude, self.c1, self.c2, False, self.label)

    def save(self, path) -> None:
        rows = ["l C_l"] + [f"{l} {float(c)!r}" for l, c in enumerate(self.cl)]
        Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")


def envelope_holds(cl, alpha, c1, c2, rtol: float = 1e-12) -> bool:
    if alpha is None or c1 is None or c2 is None or alpha <= 2:
        return False
    ell = np.arange(1, len(cl), dtype=float)
    ref = ell ** (-float(alpha))
    vals = np.asarray(cl)[1:]
    return bool(np.all(vals >= c1 * ref * (1 - rtol)) and np.all(vals <= c2 * ref * (1 + rtol)))


def power_law_spectrum(alpha: float, amplitude: float, l_max: int) -> PowerSpectrum:
    if alpha <= 2:
        raise InvalidArgument(f"power-law exponent must exceed 2, got {alpha}")
    if amplitude <= 0:
        raise InvalidArgument("amplitude must be positive")
    if l_max < 1:
        raise InvalidArgument("l_max must be >= 1")
    cl = np.zeros(l_max + 1)
    cl[1:] = amplitude * np.arange(1, l_max + 1, dtype=float) ** (-float(alpha))
    return PowerSpectrum(cl, float(alpha), float(amplitude), float(amplitude), float(amplitude), True, "power-law")


def spectrum_from_table(cl, alpha=None, c1=None, c2=None, check_envelope: bool = False) -> PowerSpectrum:
    """User-supplied ``C_l``; ``check_envelope`` tags it compliant or raises."""
    return PowerSpectrum(np.asarray(cl, float), alpha, None, c1, c2, bool(check_envelope), "table")


def load_spectrum(path, **kwargs) -> PowerSpectrum:
    rows = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip()
        if not line or line[0].isalpha():
            continue
        l, c = line.split()[:2]
        rows.append((int(l), float(c)))
    if not rows:
        raise InvalidArgument(f"{path}: no spectrum rows")
    cl = np.zeros(max(l for l, _ in rows) + 1)
    for l, c in rows:
        cl[l] = c
    return spectrum_from_table(cl, **kwargs)


def cmb_like_spectrum(l_max: int, amplitude: float = 1.0, damping_scale: float = 800.0) -> PowerSpectrum:
    """Synthetic damped power law standing in for a fitted CMB spectrum.

    ``C_l = A / (l (l + 1)) * exp(-(l / damping_scale)**2)``.  Not a fit to
    any data set and not tagged envelope-compliant.
    """
    ell = np.arange(l_max + 1, dtype=float)
    cl = np.zeros(l_max + 1)
    cl[1:] = amplitude / (ell[1:] * (ell[1:] + 1)) * np.exp(-((ell[1:] / damping_scale) ** 2))
    return PowerSpectrum(cl, None, amplitude, None, None, False, "synthetic-cmb-like")


def covariance_function(spectrum: PowerSpectrum, t):
    """``K(t) = sum_{l >= 1} C_l L_l(t)``."""
    out = legendre_series(spectrum.cl, t)
    return float(out) if np.ndim(out) == 0 else out


def _degree_normals(seed: int, l: int) -> np.ndarray:
    gen = np.random.Generator(np.random.Philox(key=np.array([seed & 0xFFFFFFFFFFFFFFFF, l], dtype=np.uint64)))
    return gen.standard_normal(2 * l + 1)


def sample_alm(spectrum: PowerSpectrum, seed: int) -> HarmonicCoefficients:
    """Draw ``a_lm`` with ``Var(a_lm) = C_l``.

    ``a_l0 = sqrt(C_l) z`` and, for ``m >= 1``, ``a_lm = sqrt(C_l / 2) (u + i v)``.
    """
    L = spectrum.l_max
    alm = np.zeros((L + 1, L + 1), dtype=complex)
    seed = int(seed)
    for l in range(1, L + 1):
        c = spectrum.cl[l]
        if c == 0.0:
            continue
        z = _degree_normals(seed, l)
        alm[l, 0] = math.sqrt(c) * z[0]
        s = math.sqrt(c / 2.0)
        alm[l, 1 : l + 1] = s * (z[1 : l + 1] + 1j * z[l + 1 :])
    return HarmonicCoefficients(alm)


def replicate_seed(master_seed: int, index: int) -> int:
    """Stable 64-bit seed for replicate ``index`` of a campaign."""
    ss = np.random.SeedSequence([int(master_seed) & 0xFFFFFFFFFFFFFFFF, int(index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def sample_alm_batch(spectrum: PowerSpectrum, seeds, workers: int = 1) -> np.ndarray:
    """Stack of ``alm`` arrays, one per seed; identical for any ``workers``."""
    seeds = [int(s) for s in seeds]
    if workers <= 1 or len(seeds) < 2:
        arrays = [sample_alm(spectrum, s).alm for s in seeds]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            arrays = [c.alm for c in pool.map(lambda s: sample_alm(spectrum, s), seeds)]
    return np.stack(arrays)


def simulate_field(spectrum: PowerSpectrum, grid: CubatureGrid, seed: int) -> np.ndarray:
    if grid.degree < 2 * spectrum.l_max:
        raise PreconditionError(f"grid degree {grid.degree} < 2 * l_max = {2 * spectrum.l_max}")
    coeffs = sample_alm(spectrum, seed)
    return RingBasis(grid, spectrum.l_max).synthesize(coeffs.alm)
