"""Parametric dielectric structures on one 2*pi period.

A structure is described by an immutable :class:`StructureSpec`.  Point
evaluation is exact; grid evaluation returns cell-averaged permittivities in
which every cell cut by the inclusion boundary carries the area-weighted mean
of the two materials.  The cut areas are computed from the parametric
boundary curve with a Green's-theorem sweep, so the averaged values vary
smoothly with the perturbation parameter.

Polar angles are measured from the +x1 axis, counter-clockwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidParameter

PERIOD = 2.0 * math.pi

FAMILIES = ("circle", "perturbed_circle", "scaled_circle", "slab")

# Gauss-Legendre rule used on every boundary arc inside a single cell.
_GL_X, _GL_W = np.polynomial.legendre.leggauss(12)


@dataclass(frozen=True)
class StructureSpec:
    """Immutable description of a 2*pi-periodic dielectric in the box |x2| < d0.

    ``family`` selects the inclusion shape:

    * ``circle``: disk of ``base_radius``; no perturbation parameter.
    * ``perturbed_circle``: radius ``base_radius * (1 + delta * g(tau))`` with a
      Gaussian bump ``g = exp(-bump_width * (tau - bump_angle)**2)``.
    * ``scaled_circle``: disk of radius ``base_radius * (1 + delta)``.
    * ``slab``: x1-independent layers ``(x2_low, x2_high, eps)``.

    Outside the box the permittivity is 1.
    """

    family: str
    eps_background: float
    eps_inclusion: float
    base_radius: float = 0.0
    d0: float = math.pi
    bump_angle: float = math.pi
    bump_width: float = 10.0
    delta_bound: float = 0.5
    layers: tuple[tuple[float, float, float], ...] = ()
    symmetry_x1: bool = field(init=False)
    symmetry_x2: bool = field(init=False)

    def __post_init__(self) -> None:
        _validate(self)
        object.__setattr__(self, "symmetry_x1", _has_x1_symmetry(self))
        object.__setattr__(self, "symmetry_x2", _has_x2_symmetry(self))

    @property
    def period(self) -> float:
        return PERIOD

    @property
    def n_delta(self) -> int:
        """Dimension of the perturbation vector."""
        return 1 if self.family in ("perturbed_circle", "scaled_circle") else 0

    @property
    def eps_min(self) -> float:
        return min(1.0, self.eps_background, self.eps_inclusion, *(e for _, _, e in self.layers))

    @property
    def eps_max(self) -> float:
        return max(1.0, self.eps_background, self.eps_inclusion, *(e for _, _, e in self.layers))

    def check_delta(self, delta: Sequence[float]) -> tuple[float, ...]:
        """Validate a perturbation vector and return it as a tuple."""
        d = tuple(float(v) for v in np.atleast_1d(np.asarray(delta, dtype=float)))
        if len(d) != self.n_delta:
            raise InvalidParameter(
                f"delta must have length {self.n_delta} for family {self.family}",
                delta=list(d),
            )
        if d and abs(d[0]) > self.delta_bound:
            raise InvalidParameter(
                f"|delta| must not exceed {self.delta_bound}", delta=list(d)
            )
        return d

    def to_dict(self) -> dict:
        out: dict = {
            "family": self.family,
            "eps_background": self.eps_background,
            "eps_inclusion": self.eps_inclusion,
            "d0": self.d0,
        }
        if self.family != "slab":
            out["base_radius"] = self.base_radius
        if self.family == "perturbed_circle":
            out["bump_angle"] = self.bump_angle
            out["bump_width"] = self.bump_width
        if self.n_delta:
            out["delta_bound"] = self.delta_bound
        if self.family == "slab":
            out["layers"] = [list(layer) for layer in self.layers]
        return out


def _validate(spec: StructureSpec) -> None:
    if spec.family not in FAMILIES:
        raise InvalidParameter(f"unknown structure family {spec.family!r}")
    if not (spec.eps_background > 0 and spec.eps_inclusion > 0):
        raise InvalidParameter("permittivities must be positive")
    if not spec.d0 > 0:
        raise InvalidParameter("d0 must be positive", d0=spec.d0)
    if spec.family == "slab":
        for lo, hi, eps in spec.layers:
            if not (-spec.d0 <= lo < hi <= spec.d0):
                raise InvalidParameter("slab layers must lie inside the box", layer=[lo, hi])
            if eps <= 0:
                raise InvalidParameter("permittivities must be positive")
        return
    if not 0 < spec.base_radius < math.pi:
        raise InvalidParameter(
            "base radius must lie in (0, pi)", base_radius=spec.base_radius
        )
    reach = spec.base_radius * (1.0 + spec.delta_bound) if spec.n_delta else spec.base_radius
    if spec.delta_bound < 0 or spec.delta_bound >= 1:
        raise InvalidParameter("delta_bound must lie in [0, 1)")
    if reach >= math.pi or reach >= spec.d0:
        raise InvalidParameter(
            "perturbed boundary leaves the cell for the declared delta range",
            max_radius=reach,
        )


def _angle_mod(a: float) -> float:
    return a % (2.0 * math.pi)


def _has_x1_symmetry(spec: StructureSpec) -> bool:
    if spec.family in ("circle", "scaled_circle", "slab"):
        return True
    # the bump maps to itself under tau -> pi - tau only on the x2 axis
    return any(
        math.isclose(_angle_mod(spec.bump_angle), a, abs_tol=1e-15)
        for a in (0.5 * math.pi, 1.5 * math.pi)
    )


def _has_x2_symmetry(spec: StructureSpec) -> bool:
    if spec.family in ("circle", "scaled_circle"):
        return True
    if spec.family == "slab":
        mirrored = sorted((-hi, -lo, e) for lo, hi, e in spec.layers)
        return mirrored == sorted(spec.layers)
    return any(
        math.isclose(_angle_mod(spec.bump_angle), a, abs_tol=1e-15)
        for a in (0.0, math.pi)
    )


def make_circle_array(
    eps0: float, eps1: float, base_radius: float, d0: float = math.pi
) -> StructureSpec:
    """Periodic array of disks of permittivity ``eps1`` in background ``eps0``."""
    return StructureSpec("circle", float(eps0), float(eps1), float(base_radius), float(d0))


def make_perturbed_circle(
    eps0: float,
    eps1: float,
    base_radius: float,
    d0: float = math.pi,
    bump_angle: float = math.pi,
    bump_width: float = 10.0,
    delta_bound: float = 0.5,
) -> StructureSpec:
    """Disk whose radius carries a Gaussian bump of relative height delta.

    With the default ``bump_angle = pi`` the bump points along -x1, which
    keeps the mirror symmetry in x2 and breaks the one in x1.
    """
    return StructureSpec(
        "perturbed_circle",
        float(eps0),
        float(eps1),
        float(base_radius),
        float(d0),
        bump_angle=float(bump_angle),
        bump_width=float(bump_width),
        delta_bound=float(delta_bound),
    )


def make_scaled_circle(
    eps0: float,
    eps1: float,
    base_radius: float,
    d0: float = math.pi,
    delta_bound: float = 0.5,
) -> StructureSpec:
    """Disk of radius ``base_radius * (1 + delta)``; keeps both mirror symmetries."""
    return StructureSpec(
        "scaled_circle",
        float(eps0),
        float(eps1),
        float(base_radius),
        float(d0),
        delta_bound=float(delta_bound),
    )


def make_slab(
    layers: Sequence[tuple[float, float, float]],
    d0: float = math.pi,
    eps0: float = 1.0,
) -> StructureSpec:
    """Stack of x1-independent layers ``(x2_low, x2_high, eps)`` in background ``eps0``."""
    layer_tuple = tuple((float(lo), float(hi), float(e)) for lo, hi, e in layers)
    eps1 = layer_tuple[0][2] if layer_tuple else float(eps0)
    return StructureSpec("slab", float(eps0), eps1, 0.0, float(d0), layers=layer_tuple)


def _bump_offset(spec: StructureSpec, tau: np.ndarray) -> np.ndarray:
    # wrapped angular distance so the bump is periodic in tau
    return (tau - spec.bump_angle + math.pi) % (2.0 * math.pi) - math.pi


def boundary_radius(
    spec: StructureSpec, tau: np.ndarray | float, delta: Sequence[float] = ()
) -> np.ndarray:
    """Inclusion radius as a function of the polar angle."""
    tau = np.asarray(tau, dtype=float)
    d = spec.check_delta(delta)
    if spec.family == "circle":
        return np.full_like(tau, spec.base_radius)
    if spec.family == "scaled_circle":
        return np.full_like(tau, spec.base_radius * (1.0 + d[0]))
    if spec.family == "perturbed_circle":
        s = _bump_offset(spec, tau)
        return spec.base_radius * (1.0 + d[0] * np.exp(-spec.bump_width * s * s))
    raise InvalidParameter("slab structures have no inclusion boundary")


def _boundary_radius_prime(
    spec: StructureSpec, tau: np.ndarray, d: tuple[float, ...]
) -> np.ndarray:
    if spec.family == "perturbed_circle":
        s = _bump_offset(spec, tau)
        g = np.exp(-spec.bump_width * s * s)
        return spec.base_radius * d[0] * g * (-2.0 * spec.bump_width * s)
    return np.zeros_like(tau)


def eval_eps(
    spec: StructureSpec,
    x1: np.ndarray | float,
    x2: np.ndarray | float,
    delta: Sequence[float] = (),
) -> np.ndarray | float:
    """Point evaluation of the permittivity; x1 is reduced modulo 2*pi."""
    scalar = np.isscalar(x1) and np.isscalar(x2)
    x1a, x2a = np.broadcast_arrays(np.asarray(x1, dtype=float), np.asarray(x2, dtype=float))
    xr = np.mod(x1a + math.pi, PERIOD) - math.pi
    d = spec.check_delta(delta)
    inside_box = np.abs(x2a) < spec.d0
    out = np.where(inside_box, spec.eps_background, 1.0).astype(float)
    if spec.family == "slab":
        for lo, hi, e in spec.layers:
            out = np.where((x2a >= lo) & (x2a < hi) & inside_box, e, out)
    else:
        rho = np.hypot(xr, x2a)
        tau = np.mod(np.arctan2(x2a, xr), 2.0 * math.pi)
        inside = (rho < boundary_radius(spec, tau, d)) & inside_box
        out = np.where(inside, spec.eps_inclusion, out)
    return float(out) if scalar else out


def grid_nodes(n1: int, n2: int, d0: float) -> tuple[np.ndarray, np.ndarray]:
    """Node coordinates: x1 periodic starting at -pi, x2 from -d0 to d0 inclusive."""
    x1 = -math.pi + (PERIOD / n1) * np.arange(n1)
    x2 = -d0 + (2.0 * d0 / n2) * np.arange(n2 + 1)
    return x1, x2


def _inclusion_fraction(
    spec: StructureSpec, d: tuple[float, ...], n1: int, n2: int
) -> np.ndarray:
    """Fraction of each node cell covered by the inclusion, shape (n1, n2 + 1)."""
    h1 = PERIOD / n1
    h2 = 2.0 * spec.d0 / n2
    n_samp = int(max(8192, 32 * (n1 + n2)))
    tau = PERIOD * np.arange(n_samp) / n_samp

    def curve(t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        r = boundary_radius(spec, t, d)
        return r * np.cos(t), r * np.sin(t)

    # continuous cell coordinates: integer values are cell edges
    def cell_coords(t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        x, y = curve(t)
        return (x + math.pi) / h1 + 0.5, (y + spec.d0) / h2 + 0.5

    cx, cy = cell_coords(tau)
    ix, iy = np.floor(cx).astype(np.int64), np.floor(cy).astype(np.int64)
    nxt = np.roll(np.arange(n_samp), -1)
    dx = ix[nxt] - ix
    dy = iy[nxt] - iy
    if np.any(np.abs(dx) > 1) or np.any(np.abs(dy) > 1):
        raise InvalidParameter("inclusion boundary too rough for the sampling density")

    crossings = []
    for shift, coord_index in ((dx, 0), (dy, 1)):
        seg = np.nonzero(shift)[0]
        if seg.size == 0:
            continue
        lo = tau[seg]
        hi = lo + PERIOD / n_samp
        base = (ix if coord_index == 0 else iy)[seg]
        line = np.where(shift[seg] > 0, base + 1, base).astype(float)
        sign = np.sign(shift[seg]).astype(float)
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            val = cell_coords(mid)[coord_index] - line
            before = sign * val < 0
            lo = np.where(before, mid, lo)
            hi = np.where(before, hi, mid)
        crossings.append(0.5 * (lo + hi))

    area = np.zeros((n1, n2 + 2))
    below = np.zeros((n1, n2 + 2))
    if crossings:
        breaks = np.sort(np.concatenate(crossings))
        ta = breaks
        tb = np.append(breaks[1:], breaks[0] + PERIOD)
    else:
        ta = np.array([0.0])
        tb = np.array([PERIOD])
    half = 0.5 * (tb - ta)
    nodes = 0.5 * (ta + tb)[:, None] + half[:, None] * _GL_X[None, :]
    r = boundary_radius(spec, nodes, d)
    rp = _boundary_radius_prime(spec, nodes, d)
    x = r * np.cos(nodes)
    y = r * np.sin(nodes)
    xp = rp * np.cos(nodes) - r * np.sin(nodes)
    mx, my = cell_coords(0.5 * (ta + tb))
    ci = np.floor(mx).astype(np.int64) % n1
    cj = np.floor(my).astype(np.int64)
    y_floor = -spec.d0 + (cj - 0.5) * h2
    integral = np.sum((y - y_floor[:, None]) * xp * _GL_W[None, :], axis=1) * half
    xa, _ = curve(ta)
    xb, _ = curve(tb)
    np.add.at(area, (ci, cj), -integral)
    np.add.at(below, (ci, cj), -h2 * (xb - xa))
    # every cell strictly below an arc receives the full-height strip
    suffix = np.cumsum(below[:, ::-1], axis=1)[:, ::-1]
    area[:, :-1] += suffix[:, 1:]
    frac = area[:, : n2 + 1] / (h1 * h2)
    # strip sums leave rounding residue of order 1e-14 in empty cells
    frac[np.abs(frac) < 1e-12] = 0.0
    frac[np.abs(frac - 1.0) < 1e-12] = 1.0
    return np.clip(frac, 0.0, 1.0)


def _slab_fraction(spec: StructureSpec, n2: int) -> list[tuple[float, np.ndarray]]:
    h2 = 2.0 * spec.d0 / n2
    centers = -spec.d0 + h2 * np.arange(n2 + 1)
    lo_edge = np.maximum(centers - 0.5 * h2, -spec.d0)
    hi_edge = np.minimum(centers + 0.5 * h2, spec.d0)
    width = hi_edge - lo_edge
    out = []
    for lo, hi, e in spec.layers:
        overlap = np.clip(np.minimum(hi_edge, hi) - np.maximum(lo_edge, lo), 0.0, None)
        out.append((e, overlap / width))
    return out


def cell_average(
    spec: StructureSpec, delta: Sequence[float], n1: int, n2: int
) -> np.ndarray:
    """Cell-averaged permittivity at the grid nodes, shape (n1, n2 + 1).

    Interior node cells span one grid spacing in each direction.  The cells of
    the two boundary rows are truncated to their half inside the box, which is
    the part that the trapezoid quadrature weights.
    """
    d = spec.check_delta(delta)
    if spec.family == "slab":
        eps = np.full((n1, n2 + 1), spec.eps_background)
        rows = np.full(n2 + 1, spec.eps_background)
        for e, frac in _slab_fraction(spec, n2):
            rows += (e - spec.eps_background) * frac
        eps[:] = rows[None, :]
    else:
        frac = _inclusion_fraction(spec, d, n1, n2)
        if np.any(frac[:, 0] > 0) or np.any(frac[:, -1] > 0):
            raise InvalidParameter("inclusion reaches the truncation boundary rows")
        eps = spec.eps_background + (spec.eps_inclusion - spec.eps_background) * frac
    if spec.symmetry_x2:
        eps = 0.5 * (eps + eps[:, ::-1])
    if spec.symmetry_x1:
        mirror = (-np.arange(n1)) % n1
        eps = 0.5 * (eps + eps[mirror, :])
    return eps


def cell_average_derivative(
    spec: StructureSpec, delta: Sequence[float], n1: int, n2: int, step: float = 1e-4
) -> list[np.ndarray]:
    """Central-difference derivative of :func:`cell_average` per delta component."""
    d = spec.check_delta(delta)
    out = []
    for j in range(len(d)):
        plus = list(d)
        minus = list(d)
        plus[j] += step
        minus[j] -= step
        out.append(
            (cell_average(spec, plus, n1, n2) - cell_average(spec, minus, n1, n2))
            / (2.0 * step)
        )
    return out
