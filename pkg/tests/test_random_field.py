import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from needlets.errors import InvalidArgument, PreconditionError
from needlets.harmonics import RingBasis, legendre_kernel
from needlets.random_field import (
    PowerSpectrum,
    cmb_like_spectrum,
    covariance_function,
    envelope_holds,
    load_spectrum,
    power_law_spectrum,
    replicate_seed,
    sample_alm,
    sample_alm_batch,
    simulate_field,
    spectrum_from_table,
)
from needlets.sphere_geom import build_grid, unit_vectors

from conftest import random_points


def seeds(n, master=99):
    return [replicate_seed(master, i) for i in range(n)]


def test_power_law_values():
    s = power_law_spectrum(3.0, 1.0, 10)
    assert s.cl[2] == 1 / 8
    assert s.cl[0] == 0.0
    assert s.compliant


@pytest.mark.parametrize("alpha", [2.0, 1.5, -1.0])
def test_alpha_must_exceed_two(alpha):
    with pytest.raises(InvalidArgument):
        power_law_spectrum(alpha, 1.0, 10)


def test_spectrum_validation():
    with pytest.raises(InvalidArgument):
        PowerSpectrum(np.array([1.0, 1.0]))
    with pytest.raises(InvalidArgument):
        PowerSpectrum(np.array([0.0, -1.0]))


def test_envelope_tag():
    cl = np.zeros(20)
    cl[1:] = 2.0 * np.arange(1, 20) ** -3.0
    assert spectrum_from_table(cl, 3.0, 1.0, 3.0, check_envelope=True).compliant
    with pytest.raises(InvalidArgument):
        spectrum_from_table(cl, 3.0, 2.5, 3.0, check_envelope=True)


@settings(max_examples=50, deadline=None)
@given(alpha=st.floats(2.01, 6.0), amp=st.floats(0.01, 100.0), L=st.integers(1, 300))
def test_power_law_envelope_property(alpha, amp, L):
    s = power_law_spectrum(alpha, amp, L)
    assert envelope_holds(s.cl, s.alpha, s.c1, s.c2)


def test_spectrum_file_round_trip(tmp_path):
    s = power_law_spectrum(3.5, 2.0, 40)
    s.save(tmp_path / "cl.txt")
    again = load_spectrum(tmp_path / "cl.txt")
    np.testing.assert_array_equal(again.cl, s.cl)


def test_cmb_like_is_synthetic():
    s = cmb_like_spectrum(300)
    assert "synthetic" in s.label
    assert not s.compliant
    assert np.all(s.cl[1:] > 0)


def test_covariance_zero_spectrum():
    s = PowerSpectrum(np.zeros(6))
    np.testing.assert_array_equal(covariance_function(s, np.linspace(-1, 1, 5)), 0.0)


def test_covariance_dipole():
    cl = np.zeros(4)
    cl[1] = 1.0
    t = np.linspace(-1, 1, 9)
    np.testing.assert_allclose(covariance_function(PowerSpectrum(cl), t), 3 * t / (4 * math.pi), atol=1e-15)


def test_zero_spectrum_zero_coefficients():
    assert np.all(sample_alm(PowerSpectrum(np.zeros(8)), 3).alm == 0)


def test_coefficient_variance_split():
    cl = np.zeros(6)
    cl[5] = 1.0
    spec = PowerSpectrum(cl)
    a = sample_alm_batch(spec, seeds(4000))[:, 5, 2]
    x = a.real
    v = np.mean(x ** 2)
    se = np.std(x ** 2, ddof=1) / math.sqrt(x.size)
    assert abs(v - 0.5) < 3 * se
    m0 = sample_alm_batch(spec, seeds(4000))[:, 5, 0]
    assert np.all(m0.imag == 0)


def test_coefficients_uncorrelated():
    spec = power_law_spectrum(3.0, 1.0, 6)
    a = sample_alm_batch(spec, seeds(3000))
    pairs = [((2, 1), (3, 1)), ((4, 0), (4, 2)), ((5, 3), (5, 4))]
    for (l, m), (lp, mp) in pairs:
        prod = a[:, l, m] * np.conj(a[:, lp, mp])
        se = np.std(prod.real, ddof=1) / math.sqrt(prod.size)
        assert abs(prod.real.mean()) < 3 * se


def test_prefix_stability():
    # per-degree streams: truncation leaves lower degrees untouched
    full = sample_alm(power_law_spectrum(3.0, 1.0, 40), 5).alm
    short = sample_alm(power_law_spectrum(3.0, 1.0, 20), 5).alm
    np.testing.assert_array_equal(full[:21, :21], short)


def test_seed_determinism():
    spec = power_law_spectrum(3.0, 1.0, 16)
    g = build_grid(32)
    a, b = simulate_field(spec, g, 11), simulate_field(spec, g, 11)
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(a, simulate_field(spec, g, 12))


def test_batch_workers_identical():
    spec = power_law_spectrum(3.0, 1.0, 30)
    s = seeds(24)
    assert sample_alm_batch(spec, s, 1).tobytes() == sample_alm_batch(spec, s, 8).tobytes()


def test_simulate_field_grid_precondition():
    with pytest.raises(PreconditionError):
        simulate_field(power_law_spectrum(3.0, 1.0, 16), build_grid(10), 1)


@pytest.fixture(scope="module")
def mc_fields():
    spec = power_law_spectrum(3.0, 1.0, 12)
    rng = np.random.default_rng(8)
    th, ph = random_points(rng, 24)
    from needlets.sphere_geom import CubatureGrid

    alm = sample_alm_batch(spec, seeds(2000, 4))
    from needlets.harmonics import synthesize, HarmonicCoefficients

    vals = np.stack([synthesize(HarmonicCoefficients(a), (th, ph)) for a in alm])
    return spec, th, ph, vals


def test_pointwise_variance_and_mean(mc_fields):
    spec, th, ph, vals = mc_fields
    x = vals[:, 0]
    se = np.std(x ** 2, ddof=1) / math.sqrt(x.size)
    assert abs(np.mean(x ** 2) - covariance_function(spec, 1.0)) < 3 * se
    allv = vals.ravel()
    assert abs(allv.mean()) < 3 * np.std(vals.mean(axis=1), ddof=1) / math.sqrt(vals.shape[0])


def test_pair_covariance(mc_fields):
    spec, th, ph, vals = mc_fields
    t = float(unit_vectors(th[1], ph[1]) @ unit_vectors(th[2], ph[2]))
    prod = vals[:, 1] * vals[:, 2]
    se = np.std(prod, ddof=1) / math.sqrt(prod.size)
    assert abs(prod.mean() - covariance_function(spec, t)) < 3 * se


def test_isotropy_equal_separation():
    # pairs with the same separation in different orientations
    spec = power_law_spectrum(3.0, 1.0, 12)
    from needlets.harmonics import synthesize, HarmonicCoefficients

    sep = 0.4
    starts = [(0.3, 0.0), (1.2, 1.0), (2.0, 4.0), (1.57, 2.2)]
    th = np.array([s[0] for s in starts] + [s[0] + sep for s in starts])
    ph = np.array([s[1] for s in starts] * 2)
    alm = sample_alm_batch(spec, seeds(2000, 21))
    vals = np.stack([synthesize(HarmonicCoefficients(a), (th, ph)) for a in alm])
    n = len(starts)
    prods = vals[:, :n] * vals[:, n:]
    means = prods.mean(axis=0)
    ses = prods.std(axis=0, ddof=1) / math.sqrt(prods.shape[0])
    target = covariance_function(spec, math.cos(sep))
    assert np.all(np.abs(means - target) < 3 * ses)
