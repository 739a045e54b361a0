"""Derivatives of the governed-field family at a bound state.

At a simple bound state u* (zero incident and outgoing coefficients) the
frequency k(beta, delta) and incident vector a(beta, delta) of the fields
governed by a unitary M are differentiable.  Their first derivatives follow
from u* and from adjoint solutions v_hat, one per propagating channel:

    dk/dbeta  = -[i (d1 u*, u*) - beta (u*, u*)] / [k (eps u*, u*)]
    dk/ddelta = -k (d_delta eps u*, u*) / [2 (eps u*, u*)]
    da/dbeta  = -(S0 - M)^-1 [-(d1 u*, v_hat) - i beta (u*, v_hat) + i k k_beta (eps u*, v_hat)]
    da/ddelta = -(S0 - M)^-1 [i k^2 (d_delta eps u*, v_hat) + 2 i k k_delta (eps u*, v_hat)] / 2

Each bracket equals -(i/2) (dA u*, v_hat) for the derivative dA of the
sesquilinear form along the frequency hypersurface.  The outgoing trace of
the perturbed field works out to S0 a' + (i/2) (dA u*, v_hat), which fixes
the leading minus sign.  The matrix xi = (S0 - M) [da/dbeta, da/ddelta]
does not depend on M, and the sign of the determinant of the reduced forms
of xi predicts the index.  All inner products run over the whole strip; the
exterior part is summed in closed form from the evanescent coefficients.

S0 is the limit of S at the bound state taken with the same adjoint
solutions: row m is the conjugated incoming vector of v_hat_m.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    DegenerateDenominator,
    InadmissibleM,
    InvalidParameter,
    NotABic,
)
from .geometry import StructureSpec, cell_average_derivative
from .smatrix import TrackOptions, eig_track, matrix_of, realize
from .solver import (
    Discretization,
    FieldSolution,
    Grid,
    inner_product_omega,
    l2_box,
)

TOL_BIC = 1e-4
SEPARATION = 10.0
TOL_ADMISSIBLE = 1e-8


def _as_grid(spec: StructureSpec, grid: Grid | tuple[int, int]) -> Grid:
    if isinstance(grid, Grid):
        return grid
    return Grid(int(grid[0]), int(grid[1]), spec.d0)


def _subtract_adjoint(v: FieldSolution, g: FieldSolution, c: complex) -> FieldSolution:
    """The adjoint field v - c g with coefficients re-read from the new vector."""
    return v.disc.field_from_vector(v.vector - c * g.vector, v.b, adjoint=True)


# ---- bound-state field ------------------------------------------------------------


@dataclass
class BicField:
    """Normalized near-null field of the homogeneous system with its diagnostics."""

    field: FieldSolution
    sigma: tuple[float, ...]
    a_norm: float
    b_norm: float

    @property
    def separation(self) -> float:
        return self.sigma[1] / self.sigma[0] if self.sigma[0] > 0 else math.inf


def _smallest_singular(disc: Discretization, block: int = 3, sweeps: int = 8):
    """Smallest singular triplets of the system matrix by subspace inverse iteration."""
    lu = disc.lu
    mat = disc.matrix
    rng = np.random.default_rng(2024)
    x = rng.standard_normal((mat.shape[0], block)) + 1j * rng.standard_normal((mat.shape[0], block))
    x, _ = np.linalg.qr(x)
    sigma = None
    for _ in range(sweeps):
        y = lu.solve(x, trans="H")
        y = lu.solve(y)
        x, _ = np.linalg.qr(y)
        ax = mat @ x
        _, s, vh = np.linalg.svd(ax, full_matrices=False)
        order = np.argsort(s)
        new_sigma = s[order]
        x = x @ vh.conj().T[:, order]
        if sigma is not None and abs(new_sigma[0] - sigma[0]) <= 1e-3 * new_sigma[1]:
            sigma = new_sigma
            break
        sigma = new_sigma
    return sigma, x[:, 0]


def bic_field(
    spec: StructureSpec,
    beta: float,
    delta: Sequence[float],
    k: float,
    grid: Grid | tuple[int, int],
    tol_bic: float = TOL_BIC,
) -> BicField:
    """Near-null field of the homogeneous problem at a localized bound state.

    The field is normalized to unit L2 norm on the box, with the phase that
    makes its largest nodal value real and positive.  Raises NotABic when the
    smallest singular value is not separated from the next by ``SEPARATION``
    or when the implied incident or outgoing coefficients exceed ``tol_bic``.
    """
    disc = Discretization(spec, beta, delta, k, _as_grid(spec, grid))
    sigma, x = _smallest_singular(disc)
    if sigma[1] < SEPARATION * sigma[0]:
        raise NotABic(
            "smallest singular value is not isolated",
            sigma=[float(s) for s in sigma], beta=beta, k=k,
        )
    residual = disc.matrix @ x
    gh, ph = disc._channel_factors()
    slots = disc._channel_slots()
    a = residual[slots] / (-2j * gh * math.sqrt(disc.grid.h1) * ph)
    fld = disc.field_from_vector(x, a)
    nodes = fld.u
    j = np.unravel_index(np.argmax(np.abs(nodes)), nodes.shape)
    phase = abs(nodes[j]) / nodes[j]
    fld = fld.scaled(phase / math.sqrt(l2_box(fld).real))
    a_norm = float(np.linalg.norm(fld.a))
    b_norm = float(np.linalg.norm(fld.b))
    if a_norm > tol_bic or b_norm > tol_bic:
        raise NotABic(
            "null field radiates", a_norm=a_norm, b_norm=b_norm, tol=tol_bic, beta=beta, k=k
        )
    return BicField(fld, tuple(float(s) for s in sigma), a_norm, b_norm)


# ---- derivative formulas -------------------------------------------------------------


@dataclass(frozen=True)
class BicPoint:
    beta: float
    delta: tuple[float, ...]
    k: float


def _quadratic_forms(u: FieldSolution, d_eps: list[np.ndarray]):
    one = inner_product_omega(u, u, "one")
    eps = inner_product_omega(u, u, "eps")
    dx1 = inner_product_omega(u, u, "d_x1")
    deps = [inner_product_omega(u, u, "d_eps", d_eps=d) for d in d_eps]
    return one, eps, dx1, deps


def _d_eps(spec: StructureSpec, disc: Discretization) -> list[np.ndarray]:
    if spec.n_delta == 0:
        return []
    return cell_average_derivative(spec, disc.delta, disc.grid.n1, disc.grid.n2)


def frequency_derivatives(
    u_star: FieldSolution, spec: StructureSpec, point: BicPoint | None = None
) -> tuple[complex, list[complex]]:
    """(dk/dbeta, [dk/ddelta_j]) as complex numbers; their imaginary parts measure quadrature error."""
    disc = u_star.disc
    beta = disc.beta if point is None else point.beta
    k = disc.k if point is None else point.k
    one, eps, dx1, deps = _quadratic_forms(u_star, _d_eps(spec, disc))
    if abs(eps) < 1e-12 * max(abs(one), 1e-300):
        raise DegenerateDenominator("weighted norm of the field vanishes", eps_norm=abs(eps))
    dk_beta = -(1j * dx1 - beta * one) / (k * eps)
    dk_delta = [-k * d / (2.0 * eps) for d in deps]
    return complex(dk_beta), [complex(d) for d in dk_delta]


def adjoint_fields(u_star: FieldSolution) -> list[FieldSolution]:
    """Adjoint solutions with unit outgoing coefficient per channel, with (eps u*, v) = 0.

    The adjoint system is singular at the bound state, so it is bordered by
    u* (one extra unknown absorbing the residual of the localized point and
    one orthogonality row).  This keeps v_hat of order one; a plain solve
    would carry a huge multiple of u* whose removal amplifies the
    localization residual.
    """
    disc = u_star.disc
    n = disc.grid.size
    x = u_star.vector
    kkt = sp.bmat(
        [
            [disc.matrix.conj().T, sp.csr_matrix(x[:, None])],
            [sp.csr_matrix((np.conj(x) * disc.weights)[None, :]), None],
        ],
        format="csc",
    )
    lu = spla.splu(kkt)
    gh, ph = disc._channel_factors()
    slots = disc._channel_slots()
    eps_norm = inner_product_omega(u_star, u_star, "eps").real
    out = []
    for j in range(2 * disc.n0):
        b = np.zeros(2 * disc.n0, dtype=complex)
        b[j] = 1.0
        rhs = np.zeros(n + 1, dtype=complex)
        rhs[slots] = 2j * gh * math.sqrt(disc.grid.h1) * np.conj(ph) * b
        v = disc.field_from_vector(lu.solve(rhs)[:n], b, adjoint=True)
        c = np.conj(inner_product_omega(u_star, v, "eps")) / eps_norm
        out.append(_subtract_adjoint(v, u_star, c))
    return out


def xi_matrix(
    u_star: FieldSolution,
    spec: StructureSpec,
    dk_beta: float,
    dk_delta: Sequence[float],
    adjoints: Sequence[FieldSolution] | None = None,
) -> np.ndarray:
    """The M-independent matrix xi, columns (beta, delta_1, ...)."""
    disc = u_star.disc
    beta, k = disc.beta, disc.k
    adjoints = adjoint_fields(u_star) if adjoints is None else adjoints
    d_eps = _d_eps(spec, disc)
    cols = []
    col = []
    for v in adjoints:
        col.append(
            -inner_product_omega(u_star, v, "d_x1")
            - 1j * beta * inner_product_omega(u_star, v, "one")
            + 1j * k * dk_beta * inner_product_omega(u_star, v, "eps")
        )
    cols.append(col)
    for d, kd in zip(d_eps, dk_delta):
        col = []
        for v in adjoints:
            col.append(
                0.5
                * (
                    1j * k * k * inner_product_omega(u_star, v, "d_eps", d_eps=d)
                    + 2j * k * kd * inner_product_omega(u_star, v, "eps")
                )
            )
        cols.append(col)
    return -np.array(cols, dtype=complex).T


def bic_smatrix(adjoints: Sequence[FieldSolution]) -> np.ndarray:
    """S at the bound state from gauged adjoint solutions (row m = conj of v_hat_m's incoming vector)."""
    return np.conj(np.array([v.a for v in adjoints]))


def averaged_smatrix(spec: StructureSpec, point: BicPoint, grid: Grid, offset: float = 1e-6) -> np.ndarray:
    """S averaged over k +- offset around the bound state.

    Near a bound state S is not jointly continuous, so this average differs
    from the limit along the governed family at the level of the residual
    coupling of the localized point.  Kept as a diagnostic.
    """
    mats = [
        matrix_of(Discretization(spec, point.beta, point.delta, point.k + s, grid)).s
        for s in (-offset, offset)
    ]
    return 0.5 * (mats[0] + mats[1])


def coefficient_derivatives(
    u_star: FieldSolution,
    spec: StructureSpec,
    point: BicPoint,
    M: np.ndarray,
    s0: np.ndarray | None = None,
    adjoints: Sequence[FieldSolution] | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(da/dbeta, da/ddelta, xi) for the family governed by M.

    ``da/ddelta`` has one column per perturbation parameter.
    """
    adjoints = adjoint_fields(u_star) if adjoints is None else adjoints
    s0 = bic_smatrix(adjoints) if s0 is None else s0
    M = np.asarray(M, dtype=complex)
    if M.shape != s0.shape:
        raise InvalidParameter("M has the wrong shape", shape=list(M.shape))
    gap = np.min(np.linalg.svd(s0 - M, compute_uv=False))
    if gap < TOL_ADMISSIBLE:
        raise InadmissibleM("S0 - M is singular", smallest_singular_value=float(gap))
    dk_beta, dk_delta = frequency_derivatives(u_star, spec, point)
    xi = xi_matrix(u_star, spec, dk_beta.real, [d.real for d in dk_delta], adjoints)
    da = np.linalg.solve(s0 - M, xi)
    return da[:, 0], da[:, 1:], xi


# ---- sufficient-condition determinants --------------------------------------------------


def reduction_matrix(n0: int, C: int) -> np.ndarray:
    """L = [I, C I] / 2."""
    eye = np.eye(n0)
    return 0.5 * np.hstack([eye, C * eye])


def mu_matrices(xi: np.ndarray, C: int = 1) -> dict[str, np.ndarray]:
    n0 = xi.shape[0] // 2
    lxi = reduction_matrix(n0, C) @ xi
    return {
        "mu1": np.vstack([xi.real, xi.imag]),
        "mu2": xi,
        "mu3": np.vstack([lxi.real, lxi.imag]),
        "mu4": lxi,
    }


def _det(m: np.ndarray) -> complex | None:
    if m.shape[0] != m.shape[1]:
        return None
    return complex(np.linalg.det(m))


DET_RTOL = 1e-8


def determinant_scale(m: np.ndarray) -> float:
    """Frobenius norm to the power of the dimension, an upper bound for |det m|."""
    return float(np.linalg.norm(m) ** m.shape[1])


def _sign(d: float, scale: float) -> int:
    if abs(d) <= DET_RTOL * scale:
        return 0
    return 1 if d > 0 else -1


def index_prediction(case: str, xi: np.ndarray, s0: np.ndarray, theta: float, C: int = 1) -> int | None:
    """Sign of the Jacobian determinant of the reduced incident-coefficient map.

    Case II makes the Jacobian (S0 - M)^-1 xi real with one global phase;
    case III takes the real 2x2 form of L (S0 - M)^-1 xi; case IV uses the
    orientation in which a_hat decreases through the bound state, matching
    the probe's convention, so a nonzero derivative predicts -1.  Returns 0
    when the determinant is below ``DET_RTOL`` of its natural scale.
    """
    M = np.exp(1j * theta) * np.eye(s0.shape[0])
    jac = np.linalg.solve(s0 - M, xi)
    if case == "II":
        if jac.shape[0] != jac.shape[1]:
            return None
        flat = realize(jac.ravel(), tol=1e-4).real.reshape(jac.shape)
        return _sign(float(np.linalg.det(flat)), determinant_scale(flat))
    elif case == "III":
        lj = reduction_matrix(jac.shape[0] // 2, C) @ jac
        real = np.vstack([lj.real, lj.imag])
        if real.shape[0] != real.shape[1]:
            return None
        return _sign(float(np.linalg.det(real)), determinant_scale(real))
    if case == "IV":
        lj = reduction_matrix(jac.shape[0] // 2, C) @ jac[:, :1]
        return _sign(-abs(complex(lj[0, 0])), float(np.linalg.norm(jac[:, :1])))
    raise InvalidParameter(f"unknown case {case!r}")


@dataclass
class DerivativeReport:
    point: BicPoint
    theta: float
    case: str
    C: int
    dk_dbeta: float
    dk_ddelta: list[float]
    dk_imag: float
    da_dbeta: np.ndarray
    da_ddelta: np.ndarray
    xi: np.ndarray
    mu_det: complex | None
    mu_scale: float
    index_prediction: int | None
    bic: BicField = field(repr=False)
    checks: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def cplx_list(v):
            return [[float(np.real(z)), float(np.imag(z))] for z in np.ravel(v)]

        return {
            "point": {"beta": self.point.beta, "delta": list(self.point.delta), "k": self.point.k},
            "theta": self.theta,
            "case": self.case,
            "C": self.C,
            "dk_dbeta": self.dk_dbeta,
            "dk_ddelta": list(self.dk_ddelta),
            "dk_imag": self.dk_imag,
            "da_dbeta": cplx_list(self.da_dbeta),
            "da_ddelta": [cplx_list(col) for col in np.atleast_2d(self.da_ddelta).T],
            "xi": [cplx_list(row) for row in self.xi],
            "mu_det": None if self.mu_det is None else [self.mu_det.real, self.mu_det.imag],
            "mu_scale": self.mu_scale,
            "index_prediction": self.index_prediction,
            "bic": {"a_norm": self.bic.a_norm, "b_norm": self.bic.b_norm, "sigma": list(self.bic.sigma)},
            "checks": self.checks,
        }


def derivative_report(
    spec: StructureSpec,
    point: BicPoint,
    grid: Grid | tuple[int, int],
    case: str,
    theta: float = math.pi,
    C: int = 1,
) -> DerivativeReport:
    """All derivative quantities at a localized bound state for one symmetry case."""
    grid = _as_grid(spec, grid)
    bic = bic_field(spec, point.beta, point.delta, point.k, grid)
    u = bic.field
    adjoints = adjoint_fields(u)
    s0 = bic_smatrix(adjoints)
    M = np.exp(1j * theta) * np.eye(s0.shape[0])
    da_b, da_d, xi = coefficient_derivatives(u, spec, point, M, s0, adjoints)
    dk_b, dk_d = frequency_derivatives(u, spec, point)
    imag = max([abs(dk_b.imag)] + [abs(d.imag) for d in dk_d])
    mus = mu_matrices(xi, C)
    key = {"I": "mu1", "II": "mu2", "III": "mu3", "IV": "mu4"}[case]
    mu = mus[key]
    return DerivativeReport(
        point, theta, case, C, dk_b.real, [d.real for d in dk_d], imag, da_b, da_d, xi,
        _det(mu), determinant_scale(mu), index_prediction(case, xi, s0, theta, C) if case != "I" else None,
        bic,
    )


# ---- independent checks -------------------------------------------------------------------


def _matrix_derivative(spec, point: BicPoint, grid: Grid, direction: int, dk: float, step: float):
    """Central difference of the system matrix along (beta or delta_j, k) with slope dk."""

    def at(sign: float):
        beta = point.beta + (sign * step if direction == 0 else 0.0)
        delta = list(point.delta)
        if direction > 0:
            delta[direction - 1] += sign * step
        return Discretization(spec, beta, delta, point.k + sign * dk * step, grid).matrix

    return (at(1.0) - at(-1.0)) / (2.0 * step)


def bordered_coefficient_derivatives(
    u_star: FieldSolution,
    spec: StructureSpec,
    point: BicPoint,
    M: np.ndarray,
    dk: Sequence[float],
    step: float = 1e-5,
) -> np.ndarray:
    """Incident-vector derivatives from the linearized discrete problem, one column per parameter.

    Solves  A x' - B a' + lambda x* = -dA x*,  E x' + (F - M) a' = 0,
    (W x*, x') = 0  for each parameter direction, where B maps incident
    coefficients to forcing and E, F give the outgoing coefficients.  It
    uses neither adjoint solutions nor S0, so it independently checks the
    closed-form derivatives.
    """
    disc = u_star.disc
    n = disc.grid.size
    n_ch = 2 * disc.n0
    gh, ph = disc._channel_factors()
    slots = disc._channel_slots()
    root = math.sqrt(disc.grid.h1)
    forcing = disc.incident_rhs(np.eye(n_ch))
    trace = sp.csr_matrix((ph * gh * root, (np.arange(n_ch), slots)), shape=(n_ch, n))
    direct = -np.diag(ph * ph) - np.asarray(M, dtype=complex)
    x = u_star.vector
    kkt = sp.bmat(
        [
            [disc.matrix, sp.csr_matrix(-forcing), sp.csr_matrix(x[:, None])],
            [trace, sp.csr_matrix(direct), None],
            [sp.csr_matrix((np.conj(x) * disc.weights)[None, :]), None, None],
        ],
        format="csc",
    )
    lu = spla.splu(kkt)
    cols = []
    for j, slope in enumerate(dk):
        d_a = _matrix_derivative(spec, point, disc.grid, j, slope, step)
        rhs = np.concatenate([-(d_a @ x), np.zeros(n_ch + 1)])
        cols.append(lu.solve(rhs)[n : n + n_ch])
    return np.array(cols).T


# ---- finite-difference oracle -------------------------------------------------------------


def tracked_frequency(
    spec: StructureSpec, beta: float, delta: Sequence[float], k_seed: float, theta: float,
    grid: Grid, parity: int | None,
) -> float:
    return eig_track(spec, beta, delta, k_seed, theta, grid, TrackOptions(parity=parity)).k_star


def central_difference(f, x0: float, h: float) -> tuple[float, float]:
    """(Richardson-extrapolated derivative, plain central difference with step h)."""
    d_h = (f(x0 + h) - f(x0 - h)) / (2.0 * h)
    d_h2 = (f(x0 + 0.5 * h) - f(x0 - 0.5 * h)) / h
    return (4.0 * d_h2 - d_h) / 3.0, d_h


def finite_difference_frequencies(
    spec: StructureSpec,
    point: BicPoint,
    grid: Grid | tuple[int, int],
    theta: float = math.pi,
    parity: int | None = None,
    step: float = 1e-3,
) -> dict:
    """Derivatives of the tracked frequency by Richardson-checked central differences."""
    grid = _as_grid(spec, grid)
    out = {}

    def k_of_beta(b: float) -> float:
        return tracked_frequency(spec, b, point.delta, point.k, theta, grid, parity)

    rich, plain = central_difference(k_of_beta, point.beta, step)
    out["dk_dbeta"] = {"richardson": rich, "central": plain}
    for j in range(len(point.delta)):
        def k_of_delta(x: float, j=j) -> float:
            d = list(point.delta)
            d[j] = x
            return tracked_frequency(spec, point.beta, d, point.k, theta, grid, parity)

        rich, plain = central_difference(k_of_delta, point.delta[j], step)
        out[f"dk_ddelta_{j}"] = {"richardson": rich, "central": plain}
    return out


def relative_error(value: float, reference: float) -> float:
    return abs(value - reference) / max(abs(reference), 1e-300)


__all__ = [
    "BicField",
    "BicPoint",
    "DerivativeReport",
    "bic_field",
    "frequency_derivatives",
    "adjoint_fields",
    "xi_matrix",
    "coefficient_derivatives",
    "bic_smatrix",
    "averaged_smatrix",
    "bordered_coefficient_derivatives",
    "mu_matrices",
    "reduction_matrix",
    "determinant_scale",
    "index_prediction",
    "derivative_report",
    "finite_difference_frequencies",
    "central_difference",
    "relative_error",
]
