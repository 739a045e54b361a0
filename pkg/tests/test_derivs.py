import math

import numpy as np
import pytest

from bicindex.derivs import (
    adjoint_fields,
    averaged_smatrix,
    bic_field,
    bic_smatrix,
    bordered_coefficient_derivatives,
    coefficient_derivatives,
    derivative_report,
    determinant_scale,
    finite_difference_frequencies,
    frequency_derivatives,
    mu_matrices,
    relative_error,
)
from bicindex.errors import InadmissibleM, NotABic
from bicindex.geometry import make_circle_array, make_scaled_circle
from bicindex.smatrix import TrackOptions, eig_track
from bicindex.solver import Grid, inner_product_omega, l2_box

from conftest import RADIUS


@pytest.fixture(scope="module")
def example2_report(side_bump, example2_point, grid128):
    return derivative_report(side_bump, example2_point, grid128, "III")


@pytest.fixture(scope="module")
def example1_report(top_bump, example1_point, grid128):
    return derivative_report(top_bump, example1_point, grid128, "II")


def test_frequency_derivatives_match_tracking(side_bump, example2_point, grid128, example2_report):
    fd = finite_difference_frequencies(side_bump, example2_point, grid128, math.pi, parity=1)
    for name, value in (("dk_dbeta", example2_report.dk_dbeta), ("dk_ddelta_0", example2_report.dk_ddelta[0])):
        ref = fd[name]
        assert relative_error(value, ref["richardson"]) < 1e-3
        # Richardson and plain differences agree, so the reference itself is converged
        assert relative_error(ref["central"], ref["richardson"]) < 1e-4


def test_frequency_derivatives_are_real(example2_report, example1_report):
    for rep in (example2_report, example1_report):
        scale = max(abs(rep.dk_dbeta), *map(abs, rep.dk_ddelta))
        assert rep.dk_imag <= 1e-6 * scale


def test_symmetry_protected_state(example1_report):
    assert abs(example1_report.dk_dbeta) < 1e-10
    # a bump that grows the disk lowers the frequency
    assert example1_report.dk_ddelta[0] < 0


def test_growing_disk_lowers_frequency(example1_point, grid128):
    spec = make_scaled_circle(1.0, 10.0, RADIUS)
    u = bic_field(spec, example1_point.beta, (0.0,), example1_point.k, grid128).field
    _, dk_delta = frequency_derivatives(u, spec, example1_point)
    assert dk_delta[0].real < 0


def test_xi_is_independent_of_m(side_bump, example2_point, example2_report):
    u = example2_report.bic.field
    adj = adjoint_fields(u)
    s0 = bic_smatrix(adj)
    dk = [example2_report.dk_dbeta] + example2_report.dk_ddelta
    xi = example2_report.xi
    for theta in (math.pi / 2, math.pi, 1.5 * math.pi):
        m = np.exp(1j * theta) * np.eye(2)
        da = bordered_coefficient_derivatives(u, side_bump, example2_point, m, dk)
        rebuilt = (s0 - m) @ da
        assert np.abs(rebuilt - xi).max() <= 1e-6 * np.abs(xi).max()
        da_b, da_d, xi_m = coefficient_derivatives(u, side_bump, example2_point, m, s0, adj)
        assert np.array_equal(xi_m, xi)
        assert np.abs(np.column_stack([da_b, da_d]) - da).max() <= 1e-6 * np.abs(da).max()


def test_coefficient_derivative_matches_tracked_fields(side_bump, example2_point, grid128, example2_report):
    # governed fields scaled so that (u, u*) equals ||u*||^2 on the box
    u = example2_report.bic.field
    h = 5e-4

    def a_at(beta):
        t = eig_track(side_bump, beta, (0.0,), example2_point.k, math.pi, grid128, TrackOptions(parity=1))
        return t.field.a * (l2_box(u).real / l2_box(t.field, u))

    fd = (a_at(example2_point.beta + h) - a_at(example2_point.beta - h)) / (2 * h)
    assert np.abs(fd - example2_report.da_dbeta).max() < 1e-4 * np.abs(fd).max()


def test_k_averaged_matrix_is_close_to_the_limit(side_bump, example2_point, grid128, example2_report):
    s0 = bic_smatrix(adjoint_fields(example2_report.bic.field))
    assert np.abs(averaged_smatrix(side_bump, example2_point, grid128) - s0).max() < 1e-2
    assert np.abs(s0.conj().T @ s0 - np.eye(2)).max() < 1e-6


def test_case3_prediction(example2_report):
    assert example2_report.mu_det is not None
    assert abs(example2_report.mu_det) > 1e-4 * example2_report.mu_scale
    assert example2_report.index_prediction == 1


def test_case2_determinant_vanishes_at_symmetry_point(example1_report):
    assert abs(example1_report.mu_det) < 1e-4 * example1_report.mu_scale
    assert example1_report.index_prediction == 0


def test_mu_shapes():
    xi = np.arange(4).reshape(2, 2) + 1j
    mus = mu_matrices(xi)
    assert mus["mu1"].shape == (4, 2)
    assert mus["mu2"].shape == (2, 2)
    assert mus["mu3"].shape == (2, 2)
    assert mus["mu4"].shape == (1, 2)
    assert determinant_scale(np.eye(2)) == pytest.approx(2.0)


def test_bound_state_field(circle, example1_point, example2_point, grid128):
    f1 = bic_field(circle, example1_point.beta, (), example1_point.k, grid128)
    u = f1.field.u
    assert l2_box(f1.field).real == pytest.approx(1.0)
    mirror = u[:, ::-1]
    assert min(np.abs(mirror - u).max(), np.abs(mirror + u).max()) < 1e-8
    assert f1.separation >= 10
    f2 = bic_field(circle, example2_point.beta, (), example2_point.k, grid128)
    assert f2.b_norm <= 1e-4 and f2.a_norm <= 1e-4


def test_whole_strip_products_do_not_depend_on_the_box(circle, example2_point, grid128):
    small = bic_field(circle, example2_point.beta, (), example2_point.k, grid128).field
    wide_spec = make_circle_array(1.0, 10.0, RADIUS, d0=1.25 * math.pi)
    wide = bic_field(wide_spec, example2_point.beta, (), example2_point.k, Grid(128, 160, 1.25 * math.pi)).field
    ratios = [inner_product_omega(f, f, "eps") / inner_product_omega(f, f, "one") for f in (small, wide)]
    assert ratios[0] == pytest.approx(ratios[1], rel=1e-10)


def test_generic_point_is_not_a_bound_state(circle, grid128):
    with pytest.raises(NotABic):
        bic_field(circle, 0.1, (), 0.5, grid128)


def test_inadmissible_m(side_bump, example2_point, example2_report):
    u = example2_report.bic.field
    s0 = bic_smatrix(adjoint_fields(u))
    with pytest.raises(InadmissibleM):
        coefficient_derivatives(u, side_bump, example2_point, s0)


@pytest.mark.slow
def test_outgoing_trace_at_fine_grid(circle):
    from bicindex.bicprobe import ProbeConfig, localize_bic

    grid = Grid(256, 256, math.pi)
    loc = localize_bic(circle, ProbeConfig(0.2206, (), 0.6173, 0.004, "IV"), grid, depth=6, polish=8)
    f = bic_field(circle, loc.beta, (), loc.k, grid)
    assert f.b_norm <= 1e-4
