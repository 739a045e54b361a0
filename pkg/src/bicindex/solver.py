"""Finite-difference discretization of the truncated quasi-periodic problem.

The unknown is the periodic part u of the field on a uniform grid: ``n1``
periodic points along x1 and ``n2 + 1`` rows from x2 = -d0 to x2 = d0.  The
matrix is the discrete sesquilinear form

    sum h1*h2 (|D1 u|^2 + |D2 u|^2 - k^2 eps |u|^2)  - boundary terms,

with the x1 difference conjugated by exp(i*beta*h1) and half weights on the
two boundary rows.  Those rows are stored by their discrete Fourier
coefficients, which makes the exterior closure diagonal.

The closure is the exact discrete outgoing condition of the same stencil
continued into the homogeneous exterior.  Order m then has the discrete
wavenumber alpha_h solving (4/h2^2) sin^2(alpha_h h2/2) = k^2 - s_m, where
s_m = (4/h1^2) sin^2((m+beta) h1/2).  Its boundary coefficient is
i sin(alpha_h h2)/h2.  Propagating channels are flux-normalized by
sin(alpha_h h2)/h2, so the discrete scattering matrix is unitary to rounding.
Coefficients are referenced to the planes x2 = +-d0 with the continuum
wavenumber: each discrete coefficient is re-phased by exp(i(alpha - alpha_h)d0).
That makes free propagation reproduce exp(2 i alpha d0) exactly.

Solves against a factorization are serialized by the caller; a
:class:`Discretization` is not meant to be shared between threads while
solving.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Literal, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import geometry
from .channels import ChannelSet, compute_channels, longitudinal_wavenumber
from .errors import (
    CutoffDegenerate,
    DimensionMismatch,
    InvalidParameter,
    MismatchedGrids,
    NearSingularSystem,
)
from .geometry import StructureSpec

Weight = Literal["one", "eps", "d_eps", "d_x1"]

_PERM_SPEC = "MMD_AT_PLUS_A"


@dataclass(frozen=True)
class Grid:
    """Uniform tensor grid on [-pi, pi) x [-d0, d0]."""

    n1: int
    n2: int
    d0: float = math.pi

    def __post_init__(self) -> None:
        if self.n1 < 16 or self.n2 < 16:
            raise InvalidParameter("grid sizes must be at least 16", n1=self.n1, n2=self.n2)
        if self.n1 % 2:
            raise InvalidParameter("n1 must be even", n1=self.n1)
        if not self.d0 > 0:
            raise InvalidParameter("d0 must be positive", d0=self.d0)

    @property
    def h1(self) -> float:
        return 2.0 * math.pi / self.n1

    @property
    def h2(self) -> float:
        return 2.0 * self.d0 / self.n2

    @property
    def size(self) -> int:
        return self.n1 * (self.n2 + 1)

    def nodes(self) -> tuple[np.ndarray, np.ndarray]:
        return geometry.grid_nodes(self.n1, self.n2, self.d0)

    def row_weights(self) -> np.ndarray:
        """Trapezoid weights in x2 (times h1 for the x1 rectangle rule)."""
        w = np.full(self.n2 + 1, self.h2)
        w[0] = w[-1] = 0.5 * self.h2
        return w * self.h1


@dataclass(frozen=True)
class GridChannels:
    """Per-order data of the discrete exterior for all n1 retained orders."""

    grid: Grid
    beta: float
    k: float
    orders: np.ndarray
    s: np.ndarray
    sigma: np.ndarray
    prop: np.ndarray
    alpha: np.ndarray
    alpha_h: np.ndarray
    ghat: np.ndarray
    g: np.ndarray
    tail: np.ndarray
    phase: np.ndarray

    @property
    def z0_index(self) -> np.ndarray:
        """Positions of the propagating orders inside the Fourier block."""
        return np.nonzero(self.prop)[0]

    @property
    def n0(self) -> int:
        return int(self.prop.sum())

    def d_alpha_h_dk(self) -> np.ndarray:
        """k-derivative of the discrete wavenumber (propagating orders)."""
        h2 = self.grid.h2
        out = np.zeros(self.orders.size)
        p = self.prop
        out[p] = self.k * h2 / np.sin(self.alpha_h[p].real * h2)
        return out

    def dg_dk(self) -> np.ndarray:
        """k-derivative of the boundary coefficient (evanescent orders)."""
        return 2.0 * self.k * self.tail

    def dghat_dk(self) -> np.ndarray:
        h2 = self.grid.h2
        out = np.zeros(self.orders.size)
        p = self.prop
        ah = self.alpha_h[p].real
        out[p] = self.k * h2 * np.cos(ah * h2) / np.sin(ah * h2)
        return out


def grid_channels(grid: Grid, beta: float, k: float, ch: ChannelSet) -> GridChannels:
    n1, h1, h2 = grid.n1, grid.h1, grid.h2
    orders = np.arange(-n1 // 2, n1 // 2)
    q = orders + beta
    s = (4.0 / h1**2) * np.sin(0.5 * q * h1) ** 2
    sigma = np.sin(q * h1) / h1
    qq = k * k - s
    prop = qq > 0
    cont_prop = np.array([m in ch.z0 for m in orders])
    if not np.array_equal(prop, cont_prop):
        raise CutoffDegenerate(
            "grid and continuum disagree on the propagating orders", beta=beta, k=k
        )
    x = np.sqrt(np.abs(qq)) * h2 / 2.0
    if np.any(x[prop] >= 1.0):
        raise InvalidParameter("grid too coarse for the frequency", k=k, h2=h2)
    alpha = longitudinal_wavenumber(k, q)
    alpha_h = np.zeros(n1, dtype=complex)
    ghat = np.zeros(n1)
    g = np.zeros(n1, dtype=complex)
    tail = np.zeros(n1)
    phase = np.ones(n1, dtype=complex)
    ap = 2.0 / h2 * np.arcsin(x[prop])
    alpha_h[prop] = ap
    ghat[prop] = np.sin(ap * h2) / h2
    g[prop] = 1j * ghat[prop]
    phase[prop] = np.exp(1j * (alpha[prop].real - ap) * grid.d0)
    ev = ~prop
    kap = 2.0 / h2 * np.arcsinh(x[ev])
    alpha_h[ev] = 1j * kap
    g[ev] = -np.sinh(kap * h2) / h2
    tail[ev] = 0.5 * h2 / np.tanh(kap * h2)
    return GridChannels(
        grid, beta, k, orders, s, sigma, prop, alpha, alpha_h, ghat, g, tail, phase
    )


def dft_matrix(grid: Grid) -> np.ndarray:
    """Unitary DFT along x1 with rows ordered m = -n1/2 .. n1/2 - 1."""
    x1, _ = grid.nodes()
    m = np.arange(-grid.n1 // 2, grid.n1 // 2)
    return np.exp(-1j * np.outer(m, x1)) / math.sqrt(grid.n1)


def _interior_pattern(grid: Grid, beta: float):
    """Index arrays and values of the k-independent interior couplings."""
    n1, n2, h1, h2 = grid.n1, grid.n2, grid.h1, grid.h2
    i = np.arange(n1)
    rows, cols, vals = [], [], []
    for j in range(1, n2):
        p = j * n1 + i
        pn = j * n1 + (i + 1) % n1
        rows += [p, pn]
        cols += [pn, p]
        vals += [
            np.full(n1, -(h2 / h1) * np.exp(1j * beta * h1)),
            np.full(n1, -(h2 / h1) * np.exp(-1j * beta * h1)),
        ]
        if j < n2 - 1:
            pu = (j + 1) * n1 + i
            rows += [p, pu]
            cols += [pu, p]
            vals += [np.full(n1, -h1 / h2)] * 2
    return rows, cols, vals


def _coupling_pattern(grid: Grid, dft: np.ndarray):
    """Dense blocks coupling each Fourier boundary row to its neighbouring node row."""
    n1, n2, h1, h2 = grid.n1, grid.n2, grid.h1, grid.h2
    rows, cols, vals = [], [], []
    for fourier_row, node_row in ((0, 1), (n2, n2 - 1)):
        fr = fourier_row * n1 + np.arange(n1)
        nr = node_row * n1 + np.arange(n1)
        rr, cc = np.meshgrid(fr, nr, indexing="ij")
        blk = -(h1 / h2) * dft
        rows += [rr.ravel(), cc.ravel()]
        cols += [cc.ravel(), rr.ravel()]
        vals += [blk.ravel(), blk.conj().ravel()]
    return rows, cols, vals


def sector_basis(grid: Grid, parity: int) -> sp.csc_matrix:
    """Columns spanning grid vectors with u(x1, -x2) = parity * u(x1, x2).

    The mirror maps row j to row n2 - j and swaps the two Fourier rows order
    by order.  Requires an even n2 so that the middle row exists.
    """
    n1, n2 = grid.n1, grid.n2
    if n2 % 2:
        raise InvalidParameter("sector reduction needs an even n2", n2=n2)
    if parity not in (1, -1):
        raise InvalidParameter("parity must be +1 or -1", parity=parity)
    half = n2 // 2
    n_rows = half + 1 if parity == 1 else half
    rows, cols, vals = [], [], []
    i = np.arange(n1)
    for j in range(n_rows):
        col = j * n1 + i
        if j == half:
            rows.append(j * n1 + i)
            cols.append(col)
            vals.append(np.ones(n1))
        else:
            rows += [j * n1 + i, (n2 - j) * n1 + i]
            cols += [col, col]
            vals += [np.ones(n1), parity * np.ones(n1)]
    return sp.csc_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(grid.size, n_rows * n1),
    )


class Discretization:
    """Assembled system at one parameter point; factorizations are built lazily."""

    def __init__(
        self,
        spec: StructureSpec,
        beta: float,
        delta: Sequence[float],
        k: float,
        grid: Grid,
        eps: np.ndarray | None = None,
    ) -> None:
        if not math.isclose(grid.d0, spec.d0, rel_tol=0, abs_tol=1e-12):
            raise MismatchedGrids("grid and structure use different d0", grid_d0=grid.d0, d0=spec.d0)
        self.spec = spec
        self.grid = grid
        self.beta = float(beta)
        self.delta = spec.check_delta(delta)
        self.k = float(k)
        self.channels = compute_channels(self.beta, self.k, grid.n1 // 2)
        self.gch = grid_channels(grid, self.beta, self.k, self.channels)
        if eps is None:
            eps = geometry.cell_average(spec, self.delta, grid.n1, grid.n2)
        self.eps = eps
        for row in (0, grid.n2):
            if np.ptp(eps[:, row]) > 1e-14:
                raise InvalidParameter("structure must be x1-independent on the boundary rows")
        self.dft = dft_matrix(grid)
        self._lu_cache: dict = {}

    # ---- layout helpers -------------------------------------------------
    @property
    def n0(self) -> int:
        return self.gch.n0

    @property
    def z0(self) -> tuple[int, ...]:
        return self.channels.z0

    def fourier_slot(self, side: str, pos: np.ndarray | int) -> np.ndarray | int:
        """Global index of Fourier position ``pos`` on side 'L' (top) or 'R' (bottom)."""
        row = self.grid.n2 if side == "L" else 0
        return row * self.grid.n1 + pos

    @cached_property
    def weights(self) -> np.ndarray:
        """Diagonal of the discrete mass matrix in the stored layout."""
        return np.repeat(self.grid.row_weights(), self.grid.n1)

    def to_grid(self, x: np.ndarray) -> np.ndarray:
        """Convert a stored vector to nodal values of shape (n1, n2 + 1)."""
        n1, n2 = self.grid.n1, self.grid.n2
        rows = np.array(x, dtype=complex).reshape(n2 + 1, n1)
        rows[0] = self.dft.conj().T @ rows[0]
        rows[n2] = self.dft.conj().T @ rows[n2]
        return rows.T.copy()

    def from_grid(self, u: np.ndarray) -> np.ndarray:
        rows = np.array(u, dtype=complex).T.copy()
        rows[0] = self.dft @ rows[0]
        rows[-1] = self.dft @ rows[-1]
        return rows.ravel()

    # ---- assembly -------------------------------------------------------
    def _matrix(self, coeff: np.ndarray) -> sp.csc_matrix:
        """Assemble with boundary coefficient ``coeff`` per order (same on both sides)."""
        grid, k, gch = self.grid, self.k, self.gch
        n1, n2, h1, h2 = grid.n1, grid.n2, grid.h1, grid.h2
        rows, cols, vals = _interior_pattern(grid, self.beta)
        r2, c2, v2 = _coupling_pattern(grid, self.dft)
        rows += r2
        cols += c2
        vals += v2
        interior = np.arange(n1, n2 * n1)
        eps_rows = self.eps.T.ravel()
        rows.append(interior)
        cols.append(interior)
        vals.append(h1 * h2 * (2.0 / h1**2 + 2.0 / h2**2 - k * k * eps_rows[interior]))
        for row in (0, n2):
            eb = self.eps[0, row]
            idx = row * n1 + np.arange(n1)
            rows.append(idx)
            cols.append(idx)
            vals.append(0.5 * h1 * h2 * (gch.s - eb * k * k) + h1 / h2 - h1 * coeff)
        return sp.csc_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(grid.size, grid.size),
        )

    @cached_property
    def matrix(self) -> sp.csc_matrix:
        """The scattering operator with outgoing closure on both sides."""
        return self._matrix(self.gch.g)

    def governed_theta(self, theta: float) -> np.ndarray:
        """Per-order phase theta_m of the discrete problem for M = exp(i theta) I."""
        gch = self.gch
        return theta - 2.0 * np.angle(gch.phase)

    def governed_matrix(self, theta: float) -> sp.csc_matrix:
        """Hermitian operator whose null vectors are fields with b = exp(i theta) a.

        On propagating orders the closure becomes the real Robin coefficient
        -ghat * tan(theta_m / 2); it is finite unless theta_m is an odd
        multiple of pi, where it is capped at a large value (a Dirichlet
        condition on that order).
        """
        gch = self.gch
        coeff = gch.g.real.astype(complex)
        th = self.governed_theta(theta)
        p = gch.prop
        coeff[p] = -gch.ghat[p] * _capped_tan(0.5 * th[p])
        return self._matrix(coeff)

    def governed_dk_diagonal(self, theta: float) -> np.ndarray:
        """Diagonal of d/dk of :meth:`governed_matrix` (the only k-dependent entries)."""
        grid, gch, k = self.grid, self.gch, self.k
        n1, n2, h1, h2 = grid.n1, grid.n2, grid.h1, grid.h2
        d = -2.0 * k * h1 * h2 * self.eps.T.ravel().astype(complex)
        th = self.governed_theta(theta)
        half = 0.5 * th
        dcoeff = gch.dg_dk().astype(complex)
        p = gch.prop
        if np.any(p):
            alpha = gch.alpha[p].real
            dth = -2.0 * self.grid.d0 * (k / alpha - gch.d_alpha_h_dk()[p])
            t = _capped_tan(half[p])
            sec2 = 1.0 + t * t
            dcoeff[p] = -gch.dghat_dk()[p] * t - gch.ghat[p] * 0.5 * sec2 * dth
        for row in (0, n2):
            idx = row * n1 + np.arange(n1)
            d[idx] = -h1 * h2 * self.eps[0, row] * k - h1 * dcoeff
        return d

    # ---- factorizations -------------------------------------------------
    def factor(self, key, mat: sp.spmatrix):
        if key not in self._lu_cache:
            try:
                self._lu_cache[key] = spla.splu(sp.csc_matrix(mat), permc_spec=_PERM_SPEC)
            except RuntimeError as exc:
                raise NearSingularSystem(
                    "sparse factorization failed", beta=self.beta, k=self.k, reason=str(exc)
                ) from exc
        return self._lu_cache[key]

    @property
    def lu(self):
        return self.factor("scattering", self.matrix)

    def _solve(self, rhs: np.ndarray, trans: str = "N") -> np.ndarray:
        x = self.lu.solve(np.asarray(rhs, dtype=complex), trans=trans)
        if not np.all(np.isfinite(x)):
            raise NearSingularSystem("solve produced non-finite values", beta=self.beta, k=self.k)
        return x

    # ---- channel coefficient maps ---------------------------------------
    def _channel_slots(self) -> np.ndarray:
        pos = self.gch.z0_index
        return np.concatenate([self.fourier_slot("L", pos), self.fourier_slot("R", pos)])

    def _channel_factors(self) -> tuple[np.ndarray, np.ndarray]:
        """(ghat^1/2 per channel, phase per channel) in L-then-R order."""
        pos = self.gch.z0_index
        gh = np.sqrt(self.gch.ghat[pos])
        ph = self.gch.phase[pos]
        return np.concatenate([gh, gh]), np.concatenate([ph, ph])

    def incident_rhs(self, a: np.ndarray) -> np.ndarray:
        """Right-hand side for incident coefficients ``a`` (columns allowed)."""
        a = np.asarray(a, dtype=complex)
        if a.shape[0] != 2 * self.n0:
            raise DimensionMismatch("incident vector has the wrong length", expected=2 * self.n0, got=a.shape[0])
        gh, ph = self._channel_factors()
        scale = -2j * gh * math.sqrt(self.grid.h1) * ph
        rhs = np.zeros((self.grid.size,) + a.shape[1:], dtype=complex)
        rhs[self._channel_slots()] = scale.reshape((-1,) + (1,) * (a.ndim - 1)) * a
        return rhs

    def boundary_traces(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(u, phi_m) on the top and bottom boundary for all orders."""
        n1, n2 = self.grid.n1, self.grid.n2
        root = math.sqrt(self.grid.h1)
        return root * x[n2 * n1 : (n2 + 1) * n1], root * x[:n1]

    def field_from_vector(self, x: np.ndarray, a: np.ndarray, adjoint: bool = False) -> "FieldSolution":
        """Package a stored solution vector together with its coefficients.

        For a direct solution ``a`` is the incident vector and the outgoing
        vector is extracted; for an adjoint solution ``a`` is the prescribed
        outgoing vector and the incoming one is extracted.
        """
        gh, ph = self._channel_factors()
        tl, tr = self.boundary_traces(x)
        pos = self.gch.z0_index
        trace = np.concatenate([tl[pos], tr[pos]])
        if adjoint:
            b_disc = np.conj(ph) * a
            other = (gh * trace - b_disc) * np.conj(ph)
            inc, out = other, np.asarray(a, dtype=complex)
        else:
            a_disc = ph * a
            out = (gh * trace - a_disc) * ph
            inc = np.asarray(a, dtype=complex)
        ev = ~self.gch.prop
        c_l = np.where(ev, tl, 0.0)
        c_r = np.where(ev, tr, 0.0)
        return FieldSolution(self, self.to_grid(x), inc, out, c_l, c_r, x, adjoint)


def _capped_tan(x: np.ndarray) -> np.ndarray:
    c = np.cos(x)
    s = np.sin(x)
    tiny = np.abs(c) < 1e-14
    return np.where(tiny, np.sign(s) * 1e14, s / np.where(tiny, 1.0, c))


@dataclass
class FieldSolution:
    """Discrete field with its channel coefficients.

    ``u`` holds nodal values with shape (n1, n2 + 1).  ``a`` and ``b`` are the
    incident and outgoing coefficient vectors (L block then R block).
    ``c_left``/``c_right`` hold the evanescent coefficients per order
    m = -n1/2 .. n1/2 - 1, zero on propagating orders.
    """

    disc: Discretization
    u: np.ndarray
    a: np.ndarray
    b: np.ndarray
    c_left: np.ndarray
    c_right: np.ndarray
    vector: np.ndarray = field(repr=False)
    adjoint: bool = False

    @property
    def c_evanescent(self) -> dict[tuple[str, int], complex]:
        orders = self.disc.gch.orders
        out = {}
        for side, c in (("L", self.c_left), ("R", self.c_right)):
            for m, val, ev in zip(orders, c, ~self.disc.gch.prop):
                if ev:
                    out[(side, int(m))] = complex(val)
        return out

    def scaled(self, factor: complex) -> "FieldSolution":
        return FieldSolution(
            self.disc,
            self.u * factor,
            self.a * factor,
            self.b * factor,
            self.c_left * factor,
            self.c_right * factor,
            self.vector * factor,
            self.adjoint,
        )


def assemble(
    spec: StructureSpec,
    beta: float,
    delta: Sequence[float],
    k: float,
    grid: Grid | tuple[int, int],
) -> Discretization:
    """Assemble the discrete scattering system at (beta, delta, k)."""
    if not isinstance(grid, Grid):
        grid = Grid(int(grid[0]), int(grid[1]), spec.d0)
    return Discretization(spec, beta, delta, k, grid)


def solve_scattering(disc: Discretization, a: np.ndarray) -> FieldSolution:
    """Field excited by incident coefficients ``a`` (length 2 N0)."""
    a = np.asarray(a, dtype=complex)
    x = disc._solve(disc.incident_rhs(a))
    return disc.field_from_vector(x, a)


def solve_adjoint(disc: Discretization, b: np.ndarray) -> FieldSolution:
    """Adjoint field whose outgoing coefficients are the prescribed ``b``."""
    b = np.asarray(b, dtype=complex)
    if b.shape[0] != 2 * disc.n0:
        raise DimensionMismatch("outgoing vector has the wrong length", expected=2 * disc.n0, got=b.shape[0])
    gh, ph = disc._channel_factors()
    rhs = np.zeros(disc.grid.size, dtype=complex)
    rhs[disc._channel_slots()] = 2j * gh * math.sqrt(disc.grid.h1) * np.conj(ph) * b
    x = disc._solve(rhs, trans="H")
    return disc.field_from_vector(x, b, adjoint=True)


def _weighted_rows(u: FieldSolution, v: FieldSolution, values: np.ndarray) -> complex:
    w = u.disc.grid.row_weights()
    return complex(np.sum(values * w[None, :]))


def inner_product_omega(
    u: FieldSolution,
    v: FieldSolution,
    weight: Weight = "one",
    component: int = 0,
    d_eps: np.ndarray | None = None,
) -> complex:
    """Weighted inner product (W u, v) over the whole domain.

    The box part uses the trapezoid rule in x2 and the rectangle rule in x1.
    The exterior part is added in closed form for the evanescent orders from
    the boundary coefficients; the exterior weight per order is the exact
    discrete tail sum, (h2/2) coth(kappa_h h2).  ``d_x1`` applies the
    derivative along x1 order by order with the symbol of the quasi-periodic
    stencil, i (sin((m+beta)h1)/h1 - beta).  ``d_eps`` uses the
    delta-derivative of the cell-averaged permittivity.
    """
    if u.disc is not v.disc:
        same = (
            u.disc.grid == v.disc.grid
            and u.disc.beta == v.disc.beta
            and u.disc.k == v.disc.k
        )
        if not same:
            raise MismatchedGrids("fields come from different discretizations")
    disc = u.disc
    gch = disc.gch
    prod = u.u * np.conj(v.u)
    if weight == "one":
        interior = _weighted_rows(u, v, prod)
        symbol = np.ones(gch.orders.size, dtype=complex)
    elif weight == "eps":
        interior = _weighted_rows(u, v, disc.eps * prod)
        symbol = np.ones(gch.orders.size, dtype=complex)
    elif weight == "d_eps":
        if d_eps is None:
            if not 0 <= component < disc.spec.n_delta:
                raise InvalidParameter("structure has no such perturbation parameter", component=component)
            d_eps = geometry.cell_average_derivative(
                disc.spec, disc.delta, disc.grid.n1, disc.grid.n2
            )[component]
        return _weighted_rows(u, v, d_eps * prod)
    elif weight == "d_x1":
        symbol = 1j * (gch.sigma - disc.beta)
        uh = disc.dft @ u.u
        vh = disc.dft @ v.u
        w = disc.grid.row_weights()
        interior = complex(np.sum(symbol[:, None] * uh * np.conj(vh) * w[None, :]))
    else:
        raise InvalidParameter(f"unknown weight {weight!r}")
    tails = 0.0 + 0.0j
    ev = ~gch.prop
    for cu, cv in ((u.c_left, v.c_left), (u.c_right, v.c_right)):
        tails += np.sum((symbol * gch.tail * cu * np.conj(cv))[ev])
    return interior + complex(tails)


def l2_box(u: FieldSolution, v: FieldSolution | None = None) -> complex:
    """Inner product over the box only (no exterior tails)."""
    v = u if v is None else v
    return _weighted_rows(u, v, u.u * np.conj(v.u))


class Sector:
    """Galerkin restriction to fields of fixed parity under x2 -> -x2.

    Exact when the permittivity is even in x2: the operator maps the sector
    into itself, so solving the reduced system reproduces the full solution.
    """

    def __init__(self, grid: Grid, parity: int) -> None:
        self.grid = grid
        self.parity = int(parity)
        self.basis = sector_basis(grid, self.parity)
        self._basis_h = self.basis.conj().T.tocsc()

    def reduce(self, mat: sp.spmatrix) -> sp.csc_matrix:
        return (self._basis_h @ mat @ self.basis).tocsc()

    def reduce_diagonal(self, diag: np.ndarray) -> np.ndarray:
        """Reduced form of a diagonal operator, returned as its diagonal."""
        # basis entries have unit modulus, so Q^H D Q is diagonal with these sums
        return abs(self.basis).T @ np.asarray(diag)

    def project(self, vec: np.ndarray) -> np.ndarray:
        return self._basis_h @ vec

    def expand(self, y: np.ndarray) -> np.ndarray:
        return self.basis @ y


def sector_solve(disc: Discretization, sector: Sector, a: np.ndarray) -> FieldSolution:
    """Scattering solve restricted to one x2-parity sector.

    ``a`` must itself lie in the sector: its R block equals parity times its L block.
    """
    a = np.asarray(a, dtype=complex)
    n0 = disc.n0
    if np.max(np.abs(a[n0:] - sector.parity * a[:n0]), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(a))):
        raise InvalidParameter("incident vector does not lie in the requested sector")
    lu = disc.factor(("sector", sector.parity), sector.reduce(disc.matrix))
    y = lu.solve(sector.project(disc.incident_rhs(a)))
    if not np.all(np.isfinite(y)):
        raise NearSingularSystem("solve produced non-finite values", beta=disc.beta, k=disc.k)
    return disc.field_from_vector(sector.expand(y), a)
