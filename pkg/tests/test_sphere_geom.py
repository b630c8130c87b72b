import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from needlets.errors import InvalidArgument, ResourceLimitError
from needlets.harmonics import ylm
from needlets.sphere_geom import (
    SpherePoint,
    build_grid,
    count_constant,
    geodesic_distance,
    grid_for_scale,
    kernel_row_sum,
    max_kernel_row_sum,
    scale_degree,
    unit_vectors,
)


@pytest.mark.parametrize("L", [0, 1, 2, 7, 32, 100])
def test_weights_positive_and_total(L):
    g = build_grid(L)
    assert np.all(g.weights > 0)
    assert g.weights.sum() == pytest.approx(4 * math.pi, abs=1e-10)


def test_degree_zero_grid_integrates_constants():
    g = build_grid(0)
    assert g.integrate(np.ones(g.point_count)) == pytest.approx(4 * math.pi, abs=1e-12)


def test_y10_integrates_to_zero():
    g = build_grid(2)
    assert abs(g.integrate(ylm(1, 0, g))) < 1e-12


def test_gram_matrix_identity():
    g = build_grid(32)
    cols = [ylm(l, m, g) for l in range(17) for m in range(-l, l + 1)]
    Y = np.array(cols)
    gram = (Y * g.weights) @ Y.conj().T
    assert np.max(np.abs(gram - np.eye(len(cols)))) < 1e-9


def test_ring_major_layout():
    g = build_grid(6)
    assert g.point_count == g.n_rings * g.n_lon
    assert np.all(np.diff(g.theta[:: g.n_lon]) > 0)
    p = g.point(g.n_lon + 2)
    assert p.theta == g.ring_theta[1]
    assert p.phi == pytest.approx(2 * 2 * math.pi / g.n_lon)


def test_scale_degree_and_count():
    assert scale_degree(3, 2.0) == 32
    g = grid_for_scale(3, 2.0)
    assert g.degree == 32
    assert g.N ** 2 == pytest.approx(g.point_count)


def test_resource_limit():
    with pytest.raises(ResourceLimitError):
        grid_for_scale(12, 2.0)


def test_point_count_scaling():
    for j in range(2, 7):
        g = grid_for_scale(j, 2.0)
        ratio = math.log(g.point_count) / (2 * j * math.log(2.0))
        assert 0.5 <= ratio <= 2.0
        assert count_constant(g, 2.0) > 0


def test_grid_save(tmp_path):
    g = build_grid(4)
    path = tmp_path / "g.txt"
    g.save(path)
    data = np.loadtxt(path, skiprows=1)
    assert data.shape == (g.point_count, 3)
    np.testing.assert_array_equal(data[:, 2], g.weights)


def test_geodesic_examples():
    north, south = SpherePoint(0.0, 0.0), SpherePoint(math.pi, 0.0)
    assert geodesic_distance(north, north) == 0.0
    assert geodesic_distance(north, south) == pytest.approx(math.pi, abs=1e-15)
    a, b = SpherePoint(math.pi / 2, 0.0), SpherePoint(math.pi / 2, math.pi / 2)
    assert geodesic_distance(a, b) == pytest.approx(math.pi / 2, abs=1e-15)


def test_geodesic_small_angles_stay_accurate():
    # arccos would round 1e-9 to zero; the atan2 form keeps it
    a = SpherePoint(1.0, 0.3)
    b = SpherePoint(1.0 + 1e-9, 0.3)
    assert geodesic_distance(a, b) == pytest.approx(1e-9, rel=1e-6)


def test_sphere_point_validation():
    with pytest.raises(InvalidArgument):
        SpherePoint(-0.1, 0.0)
    with pytest.raises(InvalidArgument):
        SpherePoint(float("nan"), 0.0)


angles = st.tuples(st.floats(0, math.pi), st.floats(0, 2 * math.pi))


@settings(max_examples=200, deadline=None)
@given(p=angles, q=angles, r=angles)
def test_geodesic_metric_axioms(p, q, r):
    u, v, w = (unit_vectors(*x) for x in (p, q, r))
    duv = geodesic_distance(u, v)
    assert 0.0 <= duv <= math.pi
    assert duv == pytest.approx(geodesic_distance(v, u), abs=1e-15)
    assert duv <= geodesic_distance(u, w) + geodesic_distance(w, v) + 1e-12


def test_row_sum_single_point():
    g = build_grid(0)
    assert kernel_row_sum(g, 0, 3, 2.0, 3) == 1.0


def test_row_sum_at_least_one():
    g = grid_for_scale(3, 2.0)
    for k in (0, 17, g.point_count // 2, g.point_count - 1):
        assert kernel_row_sum(g, k, 3, 2.0, 3) >= 1.0


def test_row_sum_needs_M_three():
    with pytest.raises(InvalidArgument):
        kernel_row_sum(build_grid(2), 0, 2.5, 2.0, 1)


def test_row_sum_equatorial_rows_scale_free():
    # away from the poles the product grid has near-uniform spacing ~ B^-j
    vals = []
    for j in (3, 4, 5):
        g = grid_for_scale(j, 2.0)
        eq = (g.n_rings // 2) * g.n_lon
        vals.append(kernel_row_sum(g, eq, 3, 2.0, j))
    assert max(vals) / min(vals) < 2.0


@pytest.mark.xfail(strict=True, reason="polar rings of the product grid oversample; the max row sum grows ~2x per scale")
def test_row_sum_max_uniform_across_scales():
    vals = [max_kernel_row_sum(grid_for_scale(j, 2.0), 3, 2.0, j) for j in (3, 4, 5)]
    assert max(vals) / min(vals) < 2.0
