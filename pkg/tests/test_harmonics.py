import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from needlets.errors import InvalidArgument, PreconditionError
from needlets.harmonics import (
    HarmonicCoefficients,
    RingBasis,
    analyze,
    assoc_legendre_table,
    legendre_kernel,
    legendre_series,
    synthesize,
    ylm,
)
from needlets.sphere_geom import SpherePoint, build_grid, unit_vectors

from conftest import random_points


def random_alm(rng, l_max):
    c = HarmonicCoefficients.zeros(l_max)
    a = rng.standard_normal((l_max + 1, l_max + 1)) + 1j * rng.standard_normal((l_max + 1, l_max + 1))
    a = np.tril(a)
    a[:, 0] = a[:, 0].real
    c.alm[:] = a
    return c


def test_l0_kernel_constant():
    t = np.linspace(-1, 1, 11)
    np.testing.assert_allclose(legendre_kernel(0, t), 1 / (4 * math.pi))


@pytest.mark.parametrize("l", [0, 1, 5, 30, 200])
def test_kernel_at_one(l):
    assert legendre_kernel(l, 1.0) == pytest.approx((2 * l + 1) / (4 * math.pi), rel=1e-13)


def test_kernel_orthogonality():
    x, w = np.polynomial.legendre.leggauss(20)
    assert abs(np.sum(w * legendre_kernel(2, x) * legendre_kernel(3, x))) < 1e-10


def test_kernel_domain():
    with pytest.raises(InvalidArgument):
        legendre_kernel(3, 1.1)


def test_series_matches_sum():
    rng = np.random.default_rng(0)
    c = rng.uniform(0, 1, 25)
    t = np.linspace(-1, 1, 7)
    direct = sum(c[l] * legendre_kernel(l, t) for l in range(25))
    np.testing.assert_allclose(legendre_series(c, t), direct, atol=1e-13)


def test_associated_legendre_against_scipy():
    from scipy.special import sph_harm_y

    rng = np.random.default_rng(3)
    th, ph = random_points(rng, 5)
    for l in (0, 1, 4, 13):
        for m in range(-l, l + 1):
            np.testing.assert_allclose(ylm(l, m, (th, ph)), sph_harm_y(l, m, th, ph), atol=1e-13)


def test_high_degree_no_underflow():
    tab = assoc_legendre_table(500, np.array([0.999999, 0.0]))
    assert np.all(np.isfinite(tab))
    # orthonormal columns satisfy sum_m |Y_lm|^2 = (2l+1)/(4 pi)
    l = 500
    s = tab[l, 0] ** 2 + 2 * np.sum(tab[l, 1:] ** 2, axis=0)
    np.testing.assert_allclose(s, (2 * l + 1) / (4 * math.pi), rtol=1e-10)


def test_y00_constant():
    p = SpherePoint(0.7, 2.0)
    assert ylm(0, 0, p) == pytest.approx(1 / math.sqrt(4 * math.pi))


def test_negative_m_symmetry():
    p = SpherePoint(1.1, 0.4)
    for l in range(6):
        for m in range(1, l + 1):
            assert ylm(l, -m, p) == pytest.approx((-1) ** m * np.conj(ylm(l, m, p)), abs=1e-15)


def test_addition_theorem(rng):
    th, ph = random_points(rng, 200)
    x, y = (th[:100], ph[:100]), (th[100:], ph[100:])
    t = np.sum(unit_vectors(*x) * unit_vectors(*y), axis=-1)
    for l in range(21):
        s = sum(ylm(l, m, x) * np.conj(ylm(l, m, y)) for m in range(-l, l + 1))
        assert np.max(np.abs(s - legendre_kernel(l, t))) < 1e-10


def test_reproducing_property(rng):
    g = build_grid(20)
    th, ph = random_points(rng, 2)
    x, y = unit_vectors(th[0], ph[0]), unit_vectors(th[1], ph[1])
    v = g.vectors
    for l in range(11):
        for lp in range(11):
            lhs = np.sum(g.weights * legendre_kernel(l, np.clip(v @ x, -1, 1)) * legendre_kernel(lp, np.clip(v @ y, -1, 1)))
            rhs = legendre_kernel(l, float(x @ y)) if l == lp else 0.0
            assert abs(lhs - rhs) < 1e-9


def test_synthesis_zero_and_constant():
    g = build_grid(8)
    c = HarmonicCoefficients.zeros(4)
    assert np.all(synthesize(c, g) == 0.0)
    c.alm[0, 0] = math.sqrt(4 * math.pi)
    np.testing.assert_allclose(synthesize(c, g), 1.0, atol=1e-14)


def test_single_mode_synthesis():
    g = build_grid(8)
    c = HarmonicCoefficients.zeros(4)
    c.alm[2, 0] = 1.0
    np.testing.assert_allclose(synthesize(c, g), ylm(2, 0, g).real, atol=1e-14)


def test_synthesis_generic_points_matches_grid(rng):
    c = random_alm(rng, 10)
    g = build_grid(20)
    np.testing.assert_allclose(synthesize(c, g.points()), synthesize(c, g), atol=1e-12)


def test_round_trip(rng):
    c = random_alm(rng, 16)
    g = build_grid(32)
    back = analyze(synthesize(c, g), g, 16)
    assert np.max(np.abs(back.alm - c.alm)) / np.max(np.abs(c.alm)) < 1e-9


def test_analyze_constant():
    g = build_grid(10)
    c = analyze(np.ones(g.point_count), g, 5)
    assert c.alm[0, 0] == pytest.approx(math.sqrt(4 * math.pi), abs=1e-12)
    rest = c.alm.copy()
    rest[0, 0] = 0
    assert np.max(np.abs(rest)) < 1e-10


def test_analyze_single_mode():
    g = build_grid(12)
    c = HarmonicCoefficients.zeros(6)
    c.alm[5, 3] = 1.0
    back = analyze(synthesize(c, g), g, 6)
    assert back.get(5, 3) == pytest.approx(1.0, abs=1e-10)
    assert back.get(5, -3) == pytest.approx(-1.0, abs=1e-10)


def test_analyze_needs_exact_grid():
    g = build_grid(10)
    with pytest.raises(PreconditionError):
        analyze(np.ones(g.point_count), g, 6)


def test_parseval(rng):
    c = random_alm(rng, 12)
    g = build_grid(24)
    T = synthesize(c, g)
    a2 = np.abs(c.alm) ** 2
    total = a2[:, 0].sum() + 2 * a2[:, 1:].sum()
    assert abs(np.sum(g.weights * T ** 2) - total) < 1e-9 * total


def test_ring_basis_batches(rng):
    g = build_grid(16)
    basis = RingBasis(g, 8)
    stack = np.stack([random_alm(rng, 8).alm for _ in range(3)])
    out = basis.synthesize(stack)
    for i in range(3):
        np.testing.assert_allclose(out[i], synthesize(HarmonicCoefficients(stack[i]), g), atol=1e-12)
    np.testing.assert_allclose(basis.analyze(out), stack, atol=1e-11)


def test_coefficient_container(tmp_path, rng):
    c = random_alm(rng, 6)
    c.validate()
    path = tmp_path / "alm.txt"
    c.save(path)
    again = HarmonicCoefficients.load(path)
    np.testing.assert_array_equal(again.alm, c.alm)
    assert c.truncated(3).l_max == 3
    np.testing.assert_array_equal(c.truncated(3).alm, c.alm[:4, :4])


def test_from_full_checks_conjugation():
    ok = HarmonicCoefficients.from_full(2, {(1, 1): 1 + 2j, (1, -1): -(1 - 2j)})
    assert ok.get(1, -1) == -(1 - 2j)
    with pytest.raises(InvalidArgument):
        HarmonicCoefficients.from_full(2, {(1, 1): 1 + 2j, (1, -1): 1 + 2j})


def test_validate_rejects_complex_m0():
    c = HarmonicCoefficients.zeros(3)
    c.alm[2, 0] = 1j
    with pytest.raises(InvalidArgument):
        c.validate()


@settings(max_examples=40, deadline=None)
@given(l=st.integers(0, 40), theta=st.floats(0, math.pi), phi=st.floats(0, 2 * math.pi))
def test_sum_of_squares_property(l, theta, phi):
    p = (np.array([theta]), np.array([phi]))
    s = sum(abs(ylm(l, m, p)[0]) ** 2 for m in range(-l, l + 1))
    assert s == pytest.approx((2 * l + 1) / (4 * math.pi), rel=1e-11)
