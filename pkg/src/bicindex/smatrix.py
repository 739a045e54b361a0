"""Scattering matrices, their structural checks, and eigenvalue tracking in k."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .channels import ChannelSet, permute, translation_matrix
from .errors import (
    BranchCrossing,
    DimensionMismatch,
    InvalidParameter,
    NoConvergence,
    RealizationFailure,
    ZeroCrossing,
)
from .geometry import StructureSpec, cell_average
from .solver import (
    Discretization,
    FieldSolution,
    Grid,
    Sector,
    sector_solve,
    solve_scattering,
)

DecomposeMode = Literal["case2_real", "case3_persym", "case4_both"]

TOL_REALIZE = 1e-8


def _as_grid(spec: StructureSpec, grid: Grid | tuple[int, int]) -> Grid:
    if isinstance(grid, Grid):
        return grid
    return Grid(int(grid[0]), int(grid[1]), spec.d0)


def _complex_pairs(m: np.ndarray) -> list:
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.atleast_2d(m)]


@dataclass(frozen=True)
class ScatteringMatrix:
    """A computed scattering matrix with its structural defects (Frobenius norms)."""

    s: np.ndarray
    beta: float
    delta: tuple[float, ...]
    k: float
    channels: ChannelSet
    unitarity_defect: float
    sym_t_defect: float
    sym_p_defect: float

    @property
    def point(self) -> tuple[float, tuple[float, ...], float]:
        return (self.beta, self.delta, self.k)

    @property
    def n0(self) -> int:
        return self.s.shape[0] // 2

    def eigenphases(self) -> np.ndarray:
        """Eigenvalue arguments in [0, 2 pi), ascending."""
        return np.sort(np.mod(np.angle(np.linalg.eigvals(self.s)), 2.0 * math.pi))

    def to_dict(self) -> dict:
        return {
            "beta": self.beta,
            "delta": list(self.delta),
            "k": self.k,
            "z0": list(self.channels.z0),
            "s": _complex_pairs(self.s),
            "unitarity_defect": self.unitarity_defect,
            "sym_t_defect": self.sym_t_defect,
            "sym_p_defect": self.sym_p_defect,
            "eigenphases": [float(x) for x in self.eigenphases()],
        }


def _defects(s: np.ndarray) -> tuple[float, float, float]:
    eye = np.eye(s.shape[0])
    return (
        float(np.linalg.norm(s.conj().T @ s - eye)),
        float(np.linalg.norm(s - s.T)),
        float(np.linalg.norm(s - permute(s))),
    )


def from_matrix(s: np.ndarray, disc: Discretization) -> ScatteringMatrix:
    u, t, p = _defects(s)
    return ScatteringMatrix(s, disc.beta, disc.delta, disc.k, disc.channels, u, t, p)


def matrix_of(disc: Discretization) -> ScatteringMatrix:
    """Scattering matrix of an assembled system, one factorization for all columns."""
    eye = np.eye(2 * disc.n0, dtype=complex)
    x = disc._solve(disc.incident_rhs(eye))
    cols = [disc.field_from_vector(x[:, j], eye[:, j]).b for j in range(2 * disc.n0)]
    return from_matrix(np.column_stack(cols), disc)


def scattering_matrix(
    spec: StructureSpec,
    beta: float,
    delta: Sequence[float],
    k: float,
    grid: Grid | tuple[int, int],
) -> ScatteringMatrix:
    """Scattering matrix at (beta, delta, k); column j is the response to unit incidence in channel j."""
    return matrix_of(Discretization(spec, beta, delta, k, _as_grid(spec, grid)))


def extend_domain(sm: ScatteringMatrix, d0: float, d1: float) -> np.ndarray:
    """Predict the matrix for the box of half-height d1 from the one computed with d0."""
    t = translation_matrix(sm.channels, d0 - d1)
    return t @ sm.s @ t


def sector_matrix(disc: Discretization, parity: int) -> np.ndarray:
    """The N0 x N0 block S_LL + parity * S_LR acting on incident vectors [v; parity v]."""
    sector = Sector(disc.grid, parity)
    n0 = disc.n0
    cols = []
    for j in range(n0):
        a = np.zeros(2 * n0, dtype=complex)
        a[j] = 1.0
        a[n0 + j] = parity
        cols.append(sector_solve(disc, sector, a).b[:n0])
    return np.column_stack(cols)


# ---- symmetric eigen-decompositions ------------------------------------------


def realize(vec: np.ndarray, tol: float = TOL_REALIZE) -> np.ndarray:
    """Rotate ``vec`` by a global phase so that it becomes real.

    The phase maximizes the real part's norm; raises RealizationFailure when
    the imaginary residual stays above ``tol`` relative to the norm.
    """
    vec = np.asarray(vec, dtype=complex)
    # maximize |Re(e^{-i phi} v)|^2: phi is half the argument of sum v_j^2
    phi = 0.5 * np.angle(np.sum(vec * vec))
    out = vec * np.exp(-1j * phi)
    resid = np.linalg.norm(out.imag) / max(np.linalg.norm(out), 1e-300)
    if resid > tol:
        raise RealizationFailure("vector has no real representative", residual=float(resid))
    return out.real.astype(complex)


def eig_decompose_symmetric(
    sm: ScatteringMatrix | np.ndarray, mode: DecomposeMode, parity: int = 1
) -> list[tuple[complex, np.ndarray]]:
    """Eigenpairs adapted to the structure's symmetry.

    ``case3_persym`` and ``case4_both`` return eigenvectors of the form
    [v; parity v] / sqrt(2) (only those of the requested side-swap parity).
    ``case2_real`` and ``case4_both`` rotate every eigenvector by a global
    phase so that it is real.
    """
    s = sm.s if isinstance(sm, ScatteringMatrix) else np.asarray(sm, dtype=complex)
    if s.ndim != 2 or s.shape[0] != s.shape[1] or s.shape[0] % 2:
        raise DimensionMismatch("expected a square matrix of even size", shape=list(s.shape))
    if mode not in ("case2_real", "case3_persym", "case4_both"):
        raise InvalidParameter(f"unknown mode {mode!r}")
    if parity not in (1, -1):
        raise InvalidParameter("parity must be +1 or -1", parity=parity)
    n0 = s.shape[0] // 2
    if mode == "case2_real":
        vals, vecs = np.linalg.eig(s)
        pairs = [(complex(vals[j]), vecs[:, j]) for j in range(2 * n0)]
    else:
        block = s[:n0, :n0] + parity * s[:n0, n0:]
        vals, vecs = np.linalg.eig(block)
        pairs = [
            (complex(vals[j]), np.concatenate([vecs[:, j], parity * vecs[:, j]]) / math.sqrt(2.0))
            for j in range(n0)
        ]
    out = []
    for lam, v in pairs:
        v = v / np.linalg.norm(v)
        if mode != "case3_persym":
            v = realize(v)
        out.append((lam, v))
    return out


# ---- eigenvalue tracking -------------------------------------------------------


@dataclass(frozen=True)
class TrackOptions:
    """Tolerances for :func:`eig_track`.

    ``tol_phase`` bounds the scale-free residual |mu| / ||A_theta|| of the
    governed operator at the returned k.  The eigenphase residual of S itself
    is checked against ``tol_phase_s``, widened to the rounding level
    1e3 * eps * amp**2 where amp is the amplification of the solve: close to a
    bound state S comes from a nearly singular system and its eigenphase
    carries rounding noise far above ``tol_phase``.

    ``tol_bound`` is the relative size of the propagating boundary
    coefficients below which the governed null field counts as a bound state.
    ``parity`` restricts the search to one x2-parity sector (structures even in
    x2 only); ``None`` searches the full space.
    """

    tol_phase: float = 1e-10
    tol_gap: float = 1e-3
    tol_k: float = 1e-13
    max_iter: int = 60
    max_step: float = 0.02
    inverse_steps: int = 4
    tol_phase_s: float = 1e-6
    tol_bound: float = 1e-9
    parity: int | None = None


@dataclass
class TrackResult:
    """Converged frequency with the selected eigenpair and its scattering field.

    ``phase_residual`` is |lambda - exp(i theta)| for the eigenvalue of S;
    ``governed_residual`` is the scale-free Newton residual; ``amplification``
    is ||field|| / ||forcing|| of the scattering solve.
    """

    k_star: float
    eigvec: np.ndarray
    eigenvalue: complex
    iterations: int
    field: FieldSolution
    phase_residual: float
    gap: float
    history: list = field(default_factory=list, repr=False)
    governed_residual: float = 0.0
    amplification: float = 1.0

    def __iter__(self):
        return iter((self.k_star, self.eigvec))


class GovernedTracker:
    """Newton iteration for k such that S(k) has eigenvalue exp(i theta).

    At fixed (beta, delta) the condition is the vanishing of the pencil
    eigenvalue mu(k) of the Hermitian governed operator A_theta(k) against
    the mass matrix W.  mu is found by shifted-free inverse iteration with the
    current factorization, and mu'(k) comes from first-order perturbation,
    x^H (dA/dk) x / x^H W x, since only diagonal entries depend on k.
    """

    def __init__(
        self,
        spec: StructureSpec,
        beta: float,
        delta: Sequence[float],
        theta: float,
        grid: Grid,
        opts: TrackOptions,
    ) -> None:
        self.spec = spec
        self.beta = float(beta)
        self.delta = spec.check_delta(delta)
        self.theta = float(theta)
        self.grid = grid
        self.opts = opts
        self.eps = cell_average(spec, self.delta, grid.n1, grid.n2)
        self.sector = None
        if opts.parity is not None:
            if not spec.symmetry_x2:
                raise InvalidParameter("parity sectors need a structure even in x2")
            self.sector = Sector(grid, opts.parity)
        self._vec: np.ndarray | None = None
        self.relative_residual = math.inf
        self.trace_ratio = math.inf

    def disc(self, k: float) -> Discretization:
        return Discretization(self.spec, self.beta, self.delta, k, self.grid, eps=self.eps)

    def _reduced(self, disc: Discretization):
        mat = disc.governed_matrix(self.theta)
        dk = disc.governed_dk_diagonal(self.theta).real
        w = disc.weights
        if self.sector is not None:
            return self.sector.reduce(mat), self.sector.reduce_diagonal(dk), self.sector.reduce_diagonal(w)
        return mat, dk, w

    def evaluate(self, k: float) -> tuple[float, float, np.ndarray]:
        """(mu, dmu/dk, eigenvector) at frequency k."""
        disc = self.disc(k)
        mat, dk, w = self._reduced(disc)
        lu = disc.factor("governed", mat)
        x = self._vec
        if x is None or x.size != mat.shape[0]:
            rng = np.random.default_rng(12345)
            x = rng.standard_normal(mat.shape[0]) + 1j * rng.standard_normal(mat.shape[0])
        mu = 0.0
        for _ in range(self.opts.inverse_steps):
            x = lu.solve(w * x)
            x /= math.sqrt(float(np.real(np.vdot(x, w * x))))
            ax = mat @ x
            mu = float(np.real(np.vdot(x, ax)))
            resid = np.linalg.norm(ax - mu * w * x) / max(np.linalg.norm(ax), 1e-300)
            if resid < 1e-10:
                break
        self._vec = x
        dmu = float(np.real(np.vdot(x, dk * x)))
        return mu, dmu, x

    def _trace_ratio(self, disc: Discretization, x: np.ndarray) -> float:
        """Size of the propagating boundary coefficients relative to the field norm."""
        full = self.sector.expand(x) if self.sector is not None else x
        slots = disc._channel_slots()
        num = math.sqrt(disc.grid.h1) * np.linalg.norm(full[slots])
        return float(num / math.sqrt(np.real(np.vdot(full, disc.weights * full))))

    def run(self, k_seed: float) -> tuple[float, int, list]:
        k = float(k_seed)
        history = []
        for it in range(1, self.opts.max_iter + 1):
            mu, dmu, _ = self.evaluate(k)
            history.append((k, mu))
            if dmu == 0.0 or not math.isfinite(dmu):
                raise NoConvergence("vanishing frequency derivative", k=k, iteration=it)
            step = -mu / dmu
            if abs(step) > self.opts.max_step:
                step = math.copysign(self.opts.max_step, step)
            k += step
            if abs(step) <= self.opts.tol_k * max(1.0, abs(k)):
                # |mu| before the last step bounds the residual at the returned k
                self.relative_residual = abs(mu) / (k * k * self.spec.eps_max)
                self.trace_ratio = self._trace_ratio(self.disc(k), self._vec)
                return k, it, history
        raise NoConvergence("frequency iteration did not converge", k=k, iterations=self.opts.max_iter)


def _angular_distance(z: complex, theta: float) -> float:
    return abs(math.remainder(np.angle(z) - theta, 2.0 * math.pi))


def _select(disc: Discretization, target: complex, parity: int | None, sector: Sector | None):
    """Eigenpair of S (or of its parity block) nearest ``target``, plus the other eigenvalues."""
    if parity is not None:
        vals, vecs = np.linalg.eig(sector_matrix(disc, parity))
    else:
        vals, vecs = np.linalg.eig(matrix_of(disc).s)
    j = int(np.argmin(np.abs(vals - target)))
    v = vecs[:, j] / np.linalg.norm(vecs[:, j])
    return complex(vals[j]), v, np.delete(vals, j)


def _phase_offset(lam: complex, target: complex) -> float:
    return float(np.angle(lam * np.conj(target)))


def eig_track(
    spec: StructureSpec,
    beta: float,
    delta: Sequence[float],
    k_seed: float,
    theta: float,
    grid: Grid | tuple[int, int],
    opts: TrackOptions | None = None,
) -> TrackResult:
    """Frequency near ``k_seed`` at which S(beta, delta, k) has eigenvalue exp(i theta).

    Newton's method on the governed operator converges to the nearest root;
    its scale-free residual must reach ``tol_phase``.  The eigenvalue of S at
    the returned k is then checked against ``tol_phase_s``, widened to the
    rounding level of S near a bound state.  The eigenvector is unit length;
    with a parity sector it has the form [v; parity v] / sqrt(2).
    """
    opts = opts or TrackOptions()
    grid = _as_grid(spec, grid)
    tracker = GovernedTracker(spec, beta, delta, theta, grid, opts)
    k_star, iters, history = tracker.run(k_seed)
    if tracker.trace_ratio < opts.tol_bound:
        raise ZeroCrossing(
            "governed field has no propagating part: the point lies on the bound-state set",
            k=k_star, trace_ratio=tracker.trace_ratio,
        )
    target = complex(math.cos(theta), math.sin(theta))

    disc = tracker.disc(k_star)
    lam, v, others = _select(disc, target, opts.parity, tracker.sector)
    if opts.parity is not None:
        eigvec = np.concatenate([v, opts.parity * v]) / math.sqrt(2.0)
        fld = sector_solve(disc, tracker.sector, eigvec)
    else:
        eigvec = v
        fld = solve_scattering(disc, eigvec)
    resid = abs(lam - target)
    # rounding in S grows with the square of the field amplification near a bound state
    amp = np.linalg.norm(fld.vector) / np.linalg.norm(disc.incident_rhs(eigvec))
    noise = 1e3 * np.finfo(float).eps * amp * amp
    if tracker.relative_residual > opts.tol_phase or resid > max(opts.tol_phase_s, noise):
        raise NoConvergence(
            "eigenvalue misses the target phase",
            k=k_star,
            governed_residual=tracker.relative_residual,
            phase_residual=resid,
        )
    gap = min((_angular_distance(z, np.angle(lam)) for z in others), default=math.pi)
    if gap < opts.tol_gap:
        raise BranchCrossing("tracked eigenvalue is not separated", k=k_star, gap=gap)
    return TrackResult(
        k_star, eigvec, lam, iters, fld, resid, gap, history, tracker.relative_residual, float(amp)
    )


__all__ = [
    "ScatteringMatrix",
    "TrackOptions",
    "TrackResult",
    "GovernedTracker",
    "scattering_matrix",
    "matrix_of",
    "sector_matrix",
    "extend_domain",
    "eig_track",
    "eig_decompose_symmetric",
    "realize",
]
