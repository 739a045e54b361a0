import math
import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bicindex.channels import rayleigh_gap
from bicindex.errors import DimensionMismatch, InvalidParameter, MismatchedGrids
from bicindex.geometry import make_circle_array, make_perturbed_circle, make_slab
from bicindex.smatrix import matrix_of
from bicindex.solver import (
    Discretization,
    Grid,
    Sector,
    assemble,
    inner_product_omega,
    l2_box,
    sector_solve,
    solve_adjoint,
    solve_scattering,
)

R = 0.6 * math.pi
VACUUM = make_slab([], math.pi, 1.0)


def _vacuum_s(beta, k, d0=math.pi):
    q = np.array([m + beta for m in range(-5, 6) if abs(m + beta) < k])
    t = np.exp(2j * np.sqrt(k * k - q * q) * d0)
    n0 = len(q)
    z = np.zeros((n0, n0))
    return np.block([[z, np.diag(t)], [np.diag(t), z]])


@pytest.mark.parametrize("beta,k,n0", [(0.0, 0.5, 1), (0.1, 1.3, 3), (0.05, 2.2, 5)])
def test_vacuum_is_pure_transmission(beta, k, n0):
    disc = assemble(VACUUM, beta, (), k, (32, 32))
    assert disc.n0 == n0
    s = matrix_of(disc).s
    assert np.abs(s - _vacuum_s(beta, k)).max() < 1e-10


@settings(max_examples=12, deadline=None)
@given(st.floats(-0.45, 0.45), st.floats(0.02, 0.98))
def test_vacuum_single_order_property(beta, t):
    k = abs(beta) + t * (1 - 2 * abs(beta))
    if rayleigh_gap(beta, k) < 1e-3:
        return
    s = matrix_of(assemble(VACUUM, beta, (), k, (16, 24))).s
    assert np.abs(s - _vacuum_s(beta, k)).max() < 1e-10


@settings(max_examples=8, deadline=None)
@given(st.floats(-0.4, 0.4), st.floats(0.1, 0.9), st.floats(-0.3, 0.3))
def test_unitarity_and_reciprocity(beta, t, delta):
    spec = make_perturbed_circle(1.0, 10.0, R)
    k = abs(beta) + t * (1 - 2 * abs(beta))
    if rayleigh_gap(beta, k) < 1e-3:
        return
    s = matrix_of(assemble(spec, beta, (delta,), k, (32, 32))).s
    s_minus = matrix_of(assemble(spec, -beta, (delta,), k, (32, 32))).s
    assert np.abs(s.conj().T @ s - np.eye(2)).max() < 1e-10
    assert np.abs(s_minus - s.T).max() < 1e-10


def test_adjoint_pairing():
    # the incoming trace of the adjoint field for outgoing b equals S^H b
    spec = make_perturbed_circle(1.0, 10.0, R)
    disc = assemble(spec, 0.17, (0.1,), 0.63, (48, 48))
    s = matrix_of(disc).s
    rng = np.random.default_rng(5)
    b = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    v = solve_adjoint(disc, b)
    assert v.adjoint and np.allclose(v.b, b)
    assert np.abs(v.a - s.conj().T @ b).max() < 1e-12


def test_sector_solve_matches_full_solve():
    spec = make_circle_array(1.0, 10.0, R)
    disc = assemble(spec, 0.2, (), 0.6, (48, 48))
    for parity in (1, -1):
        a = np.array([1.0, float(parity)], dtype=complex)
        full = solve_scattering(disc, a)
        part = sector_solve(disc, Sector(disc.grid, parity), a)
        assert np.abs(full.u - part.u).max() < 1e-10 * np.abs(full.u).max()
        assert np.allclose(full.b, part.b, atol=1e-12)


def test_field_mirror_parity():
    spec = make_circle_array(1.0, 10.0, R)
    disc = assemble(spec, 0.2, (), 0.6, (32, 32))
    u = solve_scattering(disc, np.array([1.0, -1.0])).u
    assert np.allclose(u, -u[:, ::-1], atol=1e-12)


def test_inner_products():
    spec = make_circle_array(1.0, 10.0, R)
    disc = assemble(spec, 0.1, (), 0.5, (32, 32))
    u = solve_scattering(disc, np.array([1.0, 0.5j]))
    v = solve_scattering(disc, np.array([0.3, 1.0]))
    one = inner_product_omega(u, u, "one")
    assert abs(one.imag) < 1e-12 * abs(one) and one.real > l2_box(u).real
    eps = inner_product_omega(u, u, "eps")
    assert eps.real > one.real
    assert inner_product_omega(u, v, "eps") == pytest.approx(np.conj(inner_product_omega(v, u, "eps")))
    with pytest.raises(InvalidParameter):
        inner_product_omega(u, v, "d_eps")


def test_concurrent_solves_agree():
    spec = make_circle_array(1.0, 10.0, R)
    disc = assemble(spec, 0.1, (), 0.5, (48, 48))
    ref = solve_scattering(disc, np.array([1.0, 0.0])).b
    out = []

    def work():
        out.append(solve_scattering(disc, np.array([1.0, 0.0])).b)

    threads = [threading.Thread(target=work) for _ in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert all(np.array_equal(r, ref) for r in out)


def test_input_validation():
    spec = make_circle_array(1.0, 10.0, R)
    with pytest.raises(InvalidParameter):
        Grid(8, 32, math.pi)
    with pytest.raises(MismatchedGrids):
        Discretization(spec, 0.1, (), 0.5, Grid(32, 32, 2.0))
    disc = assemble(spec, 0.1, (), 0.5, (32, 32))
    with pytest.raises(DimensionMismatch):
        solve_scattering(disc, np.ones(3))
    with pytest.raises(DimensionMismatch):
        solve_adjoint(disc, np.ones(3))
