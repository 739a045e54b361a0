import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bicindex.errors import InvalidParameter
from bicindex.geometry import (
    boundary_radius,
    cell_average,
    cell_average_derivative,
    eval_eps,
    make_circle_array,
    make_perturbed_circle,
    make_scaled_circle,
    make_slab,
)

R = 0.6 * math.pi


def _integral(values, spec, n1, n2):
    h1 = 2 * math.pi / n1
    h2 = 2 * spec.d0 / n2
    w = np.full(n2 + 1, h2)
    w[[0, -1]] *= 0.5
    return float(np.sum(values * w[None, :]) * h1)


def _trapezoid_area(eps, spec, n1, n2, delta_eps):
    return _integral(eps - spec.eps_background, spec, n1, n2) / delta_eps


def test_symmetry_flags():
    assert make_circle_array(1, 10, R).symmetry_x1
    assert make_circle_array(1, 10, R).symmetry_x2
    side = make_perturbed_circle(1, 10, R)
    assert side.symmetry_x2 and not side.symmetry_x1
    top = make_perturbed_circle(1, 10, R, bump_angle=math.pi / 2)
    assert top.symmetry_x1 and not top.symmetry_x2
    assert make_scaled_circle(1, 10, R).symmetry_x1


def test_disk_area_is_exact():
    # exact cell fractions: the weighted excess permittivity integrates to pi R^2
    spec = make_circle_array(1.0, 10.0, R)
    for n in (32, 64, 128):
        eps = cell_average(spec, (), n, n)
        assert _trapezoid_area(eps, spec, n, n, 9.0) == pytest.approx(math.pi * R * R, rel=1e-10)


@settings(max_examples=15, deadline=None)
@given(st.floats(-0.3, 0.3))
def test_scaled_disk_area(delta):
    spec = make_scaled_circle(1.0, 4.0, 1.2)
    eps = cell_average(spec, (delta,), 48, 48)
    r = 1.2 * (1 + delta)
    assert _trapezoid_area(eps, spec, 48, 48, 3.0) == pytest.approx(math.pi * r * r, rel=1e-9)


@settings(max_examples=15, deadline=None)
@given(st.floats(-0.4, 0.4))
def test_cell_average_is_bounded_and_mirrored(delta):
    spec = make_perturbed_circle(1.0, 10.0, R)
    eps = cell_average(spec, (delta,), 32, 32)
    assert eps.min() >= 1.0 - 1e-12 and eps.max() <= 10.0 + 1e-12
    assert np.array_equal(eps, eps[:, ::-1])


def test_derivative_of_growing_radius_is_nonnegative():
    spec = make_scaled_circle(1.0, 10.0, R)
    (d,) = cell_average_derivative(spec, (0.0,), 64, 64)
    assert d.min() >= -1e-8 and d.max() > 0
    # integral of d eps / d delta equals (eps1 - eps0) * d(area)/d delta = 9 * 2 pi R^2
    assert _integral(d, spec, 64, 64) == pytest.approx(9.0 * 2 * math.pi * R * R, rel=1e-6)


def test_point_evaluation():
    spec = make_circle_array(1.0, 10.0, R)
    assert eval_eps(spec, 0.0, 0.0) == 10.0
    assert eval_eps(spec, math.pi, 0.0) == 1.0
    assert eval_eps(spec, 0.0, 4.0) == 1.0
    assert eval_eps(spec, 2 * math.pi, 0.0) == 10.0


def test_perturbed_radius_peaks_at_bump():
    spec = make_perturbed_circle(1.0, 10.0, R)
    r = boundary_radius(spec, np.array([math.pi, 0.0]), (0.1,))
    assert r[0] == pytest.approx(1.1 * R)
    assert r[1] == pytest.approx(R, rel=1e-12)


def test_slab_profile_rows():
    spec = make_slab([(-1.0, 1.0, 4.0)], math.pi, 1.0)
    eps = cell_average(spec, (), 16, 64)
    assert np.all(eps == eps[:1, :])
    x2 = np.linspace(-math.pi, math.pi, 65)
    inside = np.abs(x2) < 1.0 - 2 * math.pi / 64
    assert np.allclose(eps[0, inside], 4.0)


def test_delta_bound_and_length_are_enforced():
    spec = make_perturbed_circle(1.0, 10.0, R, delta_bound=0.2)
    with pytest.raises(InvalidParameter):
        spec.check_delta((0.3,))
    with pytest.raises(InvalidParameter):
        spec.check_delta(())


def test_inclusion_touching_box_edge_is_rejected():
    with pytest.raises(InvalidParameter):
        make_circle_array(1.0, 10.0, R, d0=R)
