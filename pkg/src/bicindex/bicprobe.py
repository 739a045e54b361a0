"""Ring probes that certify bound states through winding numbers of incident coefficients.

A probe samples parameter points (beta_n, delta_n) around a candidate, finds at
each one the frequency k_n where the scattering matrix has eigenvalue
exp(i theta), and follows the incident coefficient vector a_n of the
corresponding scattering field.  Fields are normalized to unit L2 norm on the
box and phase-aligned against the first sample, so that a_n follows a
continuous vector field whose winding around the ring is the index.

Three reductions are supported:

* ``II`` (structure even in x1): a_n is real; the index is the winding of the
  planar vector a_n.
* ``III`` (structure even in x2): a_n = [v; C v]; the index is the winding of
  the complex scalar a_hat = [1 C] a / 2.
* ``IV`` (both symmetries, no perturbation parameter): two samples at
  beta_c +- r; the index is read from the signs of the real a_hat.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .errors import InvalidParameter, LostIndex, UnderResolved, ZeroCrossing
from .geometry import StructureSpec
from .smatrix import TrackOptions, TrackResult, eig_track, realize
from .solver import FieldSolution, Grid, l2_box

Case = Literal["II", "III", "IV"]

RESIDUAL_LIMIT = 0.05 * 2.0 * math.pi
TOL_AMP = 1e-8


@dataclass(frozen=True)
class ProbeConfig:
    """Ring definition and tracking parameters.

    Sample n sits at ``center + offset + r * shape @ (cos t_n, sin t_n)`` with
    t_n = 2 pi n / N in cases II and III.  In case IV the two samples are
    ``beta_c + offset[0] +- r`` (in that order).  ``delta`` is empty in case IV
    and has one component otherwise.
    """

    beta_c: float
    delta_c: tuple[float, ...]
    k_seed: float
    r: float
    case: Case
    n_samples: int = 24
    theta: float = math.pi
    C: int = 1
    shape: tuple[tuple[float, float], tuple[float, float]] = ((1.0, 0.0), (0.0, 1.0))
    offset: tuple[float, float] = (0.0, 0.0)
    chain: bool = True
    threads: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "delta_c", tuple(float(d) for d in self.delta_c))
        object.__setattr__(self, "shape", tuple(tuple(float(x) for x in row) for row in self.shape))
        object.__setattr__(self, "offset", tuple(float(x) for x in self.offset))
        if self.case not in ("II", "III", "IV"):
            raise InvalidParameter(f"unknown case {self.case!r}")
        if not self.r > 0:
            raise InvalidParameter("ring radius must be positive", r=self.r)
        if self.C not in (1, -1):
            raise InvalidParameter("C must be +1 or -1", C=self.C)
        if self.case == "IV":
            if self.n_samples != 2:
                object.__setattr__(self, "n_samples", 2)
            if self.delta_c:
                raise InvalidParameter("case IV has no perturbation parameter")
        else:
            if self.n_samples < 8:
                raise InvalidParameter("rings need at least 8 samples", n_samples=self.n_samples)
            if len(self.delta_c) != 1:
                raise InvalidParameter("cases II and III need one perturbation parameter")
        if self.threads < 1:
            raise InvalidParameter("threads must be positive", threads=self.threads)

    def points(self) -> list[tuple[float, tuple[float, ...]]]:
        """Sample points (beta_n, delta_n)."""
        if self.case == "IV":
            b = self.beta_c + self.offset[0]
            return [(b + self.r, ()), (b - self.r, ())]
        shape = np.array(self.shape)
        out = []
        for n in range(self.n_samples):
            t = 2.0 * math.pi * n / self.n_samples
            d = self.r * shape @ np.array([math.cos(t), math.sin(t)])
            out.append(
                (
                    float(self.beta_c + self.offset[0] + d[0]),
                    (float(self.delta_c[0] + self.offset[1] + d[1]),),
                )
            )
        return out

    def with_ring(self, beta_c: float, delta_c: Sequence[float], r: float, k_seed: float) -> "ProbeConfig":
        return ProbeConfig(
            beta_c, tuple(delta_c), k_seed, r, self.case, self.n_samples, self.theta, self.C,
            self.shape, self.offset, self.chain, self.threads,
        )

    def to_dict(self) -> dict:
        return {
            "beta_c": self.beta_c,
            "delta_c": list(self.delta_c),
            "k_seed": self.k_seed,
            "r": self.r,
            "case": self.case,
            "n_samples": self.n_samples,
            "theta": self.theta,
            "C": self.C,
            "shape": [list(row) for row in self.shape],
            "offset": list(self.offset),
        }


@dataclass
class ProbeResult:
    """Outcome of one ring probe."""

    config: ProbeConfig
    samples: list[tuple[float, tuple[float, ...]]]
    k_n: list[float]
    a_n: list[np.ndarray]
    a_hat_n: list
    index: int
    residual: float
    max_step_angle: float
    alignment_imag: float
    fields: list[FieldSolution] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        def cplx(z: complex) -> list[float]:
            return [float(np.real(z)), float(np.imag(z))]

        if self.config.case == "II":
            a_hat = [[float(x) for x in np.real(v)] for v in self.a_hat_n]
        else:
            a_hat = [cplx(z) for z in self.a_hat_n]
        return {
            "case": self.config.case,
            "config": self.config.to_dict(),
            "index": int(self.index),
            "residual": float(self.residual),
            "max_step_angle": float(self.max_step_angle),
            "alignment_imag": float(self.alignment_imag),
            "samples": [[b, list(d)] for b, d in self.samples],
            "k_n": [float(k) for k in self.k_n],
            "a_n": [[cplx(z) for z in a] for a in self.a_n],
            "a_hat_n": a_hat,
        }

    def csv_rows(self) -> list[list]:
        rows = []
        for n, ((b, d), k, ah) in enumerate(zip(self.samples, self.k_n, self.a_hat_n)):
            dval = d[0] if d else 0.0
            if self.config.case == "II":
                re, im = float(np.real(ah[0])), float(np.real(ah[1]))
            else:
                re, im = float(np.real(ah)), float(np.imag(ah))
            rows.append([n, b, dval, k, re, im])
        return rows

    def to_csv(self, fmt=repr) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["n", "beta", "delta", "k", "re_a_hat", "im_a_hat"])
        for row in self.csv_rows():
            writer.writerow([row[0]] + [fmt(float(x)) for x in row[1:]])
        return buf.getvalue()


# ---- index formulas -------------------------------------------------------------


def _closed_sum(angles: np.ndarray) -> tuple[int, float, float]:
    total = float(np.sum(angles))
    index = int(round(total / (2.0 * math.pi)))
    resid = abs(total - 2.0 * math.pi * index)
    return index, resid, float(np.max(np.abs(angles))) if angles.size else 0.0


def winding_real(vectors: Sequence[np.ndarray]) -> tuple[int, float, float]:
    """(index, residual, largest step angle) for a closed loop of planar vectors."""
    v = np.array([np.real(np.asarray(x))[:2] for x in vectors], dtype=float)
    nxt = np.roll(v, -1, axis=0)
    cross = v[:, 0] * nxt[:, 1] - v[:, 1] * nxt[:, 0]
    dot = np.sum(v * nxt, axis=1)
    return _closed_sum(np.arctan2(cross, dot))


def winding_complex(values: Sequence[complex]) -> tuple[int, float, float]:
    """(index, residual, largest step angle) for a closed loop of complex scalars."""
    z = np.asarray(values, dtype=complex)
    return _closed_sum(np.angle(np.roll(z, -1) / z))


def index_case4(a_hat_0: float, a_hat_1: float) -> int:
    """Sign table: 0 without a sign change, else +1 if a_hat_1 < 0 and -1 if a_hat_1 > 0."""
    if a_hat_0 * a_hat_1 > 0:
        return 0
    if a_hat_0 * a_hat_1 < 0:
        return 1 if a_hat_1 < 0 else -1
    raise ZeroCrossing("a sample has vanishing reduced coefficient", a_hat_0=a_hat_0, a_hat_1=a_hat_1)


def reduce_pair(a: np.ndarray, C: int) -> complex:
    """a_hat = [1 C] a / 2 for a two-component coefficient vector."""
    return complex((a[0] + C * a[1]) / 2.0)


# ---- sampling ------------------------------------------------------------------


def _check_structure(spec: StructureSpec, case: Case) -> None:
    if case == "II" and not spec.symmetry_x1:
        raise InvalidParameter("case II needs a structure even in x1")
    if case == "III" and not spec.symmetry_x2:
        raise InvalidParameter("case III needs a structure even in x2")
    if case == "IV" and not (spec.symmetry_x1 and spec.symmetry_x2):
        raise InvalidParameter("case IV needs a structure even in x1 and x2")
    n_delta = 0 if case == "IV" else 1
    if spec.n_delta != n_delta:
        raise InvalidParameter(
            "structure family has the wrong number of perturbation parameters",
            case=case, n_delta=spec.n_delta,
        )


def _track(spec, point, k_seed, cfg: ProbeConfig, grid: Grid) -> TrackResult:
    parity = None if cfg.case == "II" else cfg.C
    beta, delta = point
    t = eig_track(spec, beta, delta, k_seed, cfg.theta, grid, TrackOptions(parity=parity))
    if t.field.disc.n0 != 1:
        raise InvalidParameter("probes need exactly one propagating order", n0=t.field.disc.n0)
    return t


def _normalized(t: TrackResult, real: bool) -> tuple[np.ndarray, FieldSolution]:
    """Unit-norm field; for the real reductions the coefficient vector is made real first."""
    a = t.eigvec
    fld = t.field
    if real:
        ar = realize(a)
        j = int(np.argmax(np.abs(a)))
        fld = fld.scaled(ar[j] / a[j])
    nrm = math.sqrt(l2_box(fld).real)
    fld = fld.scaled(1.0 / nrm)
    return fld.a, fld


def track_ring(
    spec: StructureSpec, cfg: ProbeConfig, grid: Grid, points=None
) -> tuple[list, list[TrackResult]]:
    """Track every sample; ring samples chain their seeds unless disabled, the case IV pair starts from k_seed."""
    points = cfg.points() if points is None else points
    if cfg.case == "IV":
        # the two samples straddle the seed, which predicts each better than the other sample does
        return points, [_track(spec, p, cfg.k_seed, cfg, grid) for p in points]
    if cfg.chain or cfg.threads == 1:
        results = []
        seed = cfg.k_seed
        for p in points:
            t = _track(spec, p, seed, cfg, grid)
            results.append(t)
            if cfg.chain:
                seed = t.k_star
        return points, results
    first = _track(spec, points[0], cfg.k_seed, cfg, grid)
    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        rest = list(pool.map(lambda p: _track(spec, p, first.k_star, cfg, grid), points[1:]))
    return points, [first] + rest


def align(
    tracked: Sequence[TrackResult], real: bool, reference: FieldSolution | None = None
) -> tuple[list[np.ndarray], list[FieldSolution], float]:
    """Normalize each field and rotate it so that (u_ref, u_n) is real and positive.

    With ``real`` the rotation is restricted to a sign, keeping a_n real; the
    largest relative imaginary part of (u_ref, u_n) is returned as a check.
    """
    a_list, fields = [], []
    worst_imag = 0.0
    for t in tracked:
        a, fld = _normalized(t, real)
        ref = fields[0] if reference is None and fields else reference
        if ref is not None:
            z = l2_box(ref, fld)
            if z == 0:
                raise ZeroCrossing("field is orthogonal to the reference field")
            if real:
                worst_imag = max(worst_imag, abs(z.imag) / abs(z))
                factor = 1.0 if z.real > 0 else -1.0
            else:
                factor = z / abs(z)
            fld = fld.scaled(factor)
            a = fld.a
        a_list.append(a)
        fields.append(fld)
    return a_list, fields, worst_imag


def _check_amplitudes(values: Sequence[float], scale: float) -> None:
    for n, v in enumerate(values):
        if v < TOL_AMP * scale:
            raise ZeroCrossing("a sample sits on the bound-state set", sample=n, amplitude=float(v))


def _finish(cfg, points, tracked, a_list, fields, a_hat, index, resid, max_step, imag) -> ProbeResult:
    if resid > RESIDUAL_LIMIT:
        raise UnderResolved("winding sum is not close to a multiple of 2 pi", residual=resid)
    return ProbeResult(
        cfg, list(points), [t.k_star for t in tracked], a_list, a_hat, index, resid, max_step,
        imag, fields,
    )


def probe_case2(spec: StructureSpec, cfg: ProbeConfig, grid: Grid) -> ProbeResult:
    """Winding of the real coefficient vector around the ring."""
    _check_structure(spec, "II")
    points, tracked = track_ring(spec, cfg, grid)
    a_list, fields, imag = align(tracked, real=True)
    vecs = [np.real(a) for a in a_list]
    _check_amplitudes([float(np.linalg.norm(v)) for v in vecs], max(np.linalg.norm(v) for v in vecs))
    index, resid, step = winding_real(vecs)
    return _finish(cfg, points, tracked, a_list, fields, vecs, index, resid, step, imag)


def probe_case3(spec: StructureSpec, cfg: ProbeConfig, grid: Grid) -> ProbeResult:
    """Winding of the reduced complex coefficient a_hat around the ring."""
    _check_structure(spec, "III")
    points, tracked = track_ring(spec, cfg, grid)
    a_list, fields, imag = align(tracked, real=False)
    a_hat = [reduce_pair(a, cfg.C) for a in a_list]
    _check_amplitudes([abs(z) for z in a_hat], max(np.linalg.norm(a) for a in a_list))
    index, resid, step = winding_complex(a_hat)
    return _finish(cfg, points, tracked, a_list, fields, a_hat, index, resid, step, imag)


def orient_case4(a_hat: Sequence[float]) -> float:
    """Global sign making a_hat_1 positive; fixes the orientation of the reference field."""
    return -1.0 if a_hat[1] < 0 else 1.0


def probe_case4(spec: StructureSpec, cfg: ProbeConfig, grid: Grid) -> ProbeResult:
    """Sign comparison of the real reduced coefficient at beta_c + r and beta_c - r."""
    _check_structure(spec, "IV")
    points, tracked = track_ring(spec, cfg, grid)
    a_list, fields, imag = align(tracked, real=True)
    a_hat = [reduce_pair(a, cfg.C).real for a in a_list]
    _check_amplitudes([abs(x) for x in a_hat], max(np.linalg.norm(a) for a in a_list))
    sign = orient_case4(a_hat)
    a_hat = [complex(sign * x) for x in a_hat]
    a_list = [sign * a for a in a_list]
    fields = [f.scaled(sign) for f in fields]
    index = index_case4(a_hat[0].real, a_hat[1].real)
    return _finish(cfg, points, tracked, a_list, fields, a_hat, index, 0.0, 0.0, imag)


def probe(spec: StructureSpec, cfg: ProbeConfig, grid: Grid) -> ProbeResult:
    return {"II": probe_case2, "III": probe_case3, "IV": probe_case4}[cfg.case](spec, cfg, grid)


# ---- localization ----------------------------------------------------------------


@dataclass(frozen=True)
class Localization:
    beta: float
    delta: tuple[float, ...]
    k: float
    r: float
    levels: int

    def to_dict(self) -> dict:
        return {"beta": self.beta, "delta": list(self.delta), "k": self.k, "r": self.r, "levels": self.levels}


def _localize_case4(spec, cfg: ProbeConfig, grid: Grid, depth: int, polish: int) -> Localization:
    base = probe_case4(spec, cfg, grid)
    if base.index == 0:
        raise LostIndex("starting interval carries no index")
    ref = base.fields[0]
    lo, hi = base.samples[1][0], base.samples[0][0]
    s_lo, s_hi = base.a_hat_n[1].real, base.a_hat_n[0].real
    k_lo, k_hi = base.k_n[1], base.k_n[0]

    def sample(beta: float, k_seed: float) -> tuple[float, float, float]:
        t = _track(spec, (beta, ()), k_seed, cfg, grid)
        a_list, _, _ = align([t], real=True, reference=ref)
        return reduce_pair(a_list[0], cfg.C).real, float(np.linalg.norm(a_list[0])), t.k_star

    r_stop = 2.0 ** (-depth) * cfg.r
    levels = 0
    while 0.5 * (hi - lo) >= r_stop:
        mid = 0.5 * (lo + hi)
        try:
            s_mid, scale, k_mid = sample(mid, 0.5 * (k_lo + k_hi))
        except ZeroCrossing as exc:
            return Localization(mid, (), float(exc.details["k"]), 0.0, levels + 1)
        levels += 1
        if abs(s_mid) < TOL_AMP * scale:
            return Localization(mid, (), k_mid, 0.0, levels)
        if s_mid * s_lo < 0:
            hi, s_hi, k_hi = mid, s_mid, k_mid
        else:
            lo, s_lo, k_lo = mid, s_mid, k_mid
    beta, k = 0.5 * (lo + hi), 0.5 * (k_lo + k_hi)
    # regula falsi (Illinois variant) on the reduced coefficient inside the final bracket
    side = 0
    for _ in range(polish):
        beta = (lo * s_hi - hi * s_lo) / (s_hi - s_lo)
        try:
            s_new, scale, k = sample(beta, 0.5 * (k_lo + k_hi))
        except ZeroCrossing as exc:
            return Localization(beta, (), float(exc.details["k"]), 0.0, levels + 1)
        levels += 1
        if abs(s_new) < TOL_AMP * scale or hi - lo < 1e-13 * max(1.0, abs(beta)):
            break
        if s_new * s_lo < 0:
            hi, s_hi, k_hi = beta, s_new, k
            if side == -1:
                s_lo *= 0.5
            side = -1
        else:
            lo, s_lo, k_lo = beta, s_new, k
            if side == 1:
                s_hi *= 0.5
            side = 1
    return Localization(beta, (), k, 0.5 * (hi - lo), levels)


def _localize_ring(spec, cfg: ProbeConfig, grid: Grid, depth: int) -> Localization:
    run = probe_case2 if cfg.case == "II" else probe_case3
    current = run(spec, cfg, grid)
    if current.index == 0:
        raise LostIndex("starting ring carries no index")
    shape = np.array(cfg.shape)
    center = np.array([cfg.beta_c, cfg.delta_c[0]])
    r = cfg.r
    k_mean = float(np.mean(current.k_n))
    r_stop = 2.0 ** (-depth) * cfg.r
    levels = 0
    while r >= r_stop:
        found = None
        for sx, sy in ((1, 1), (-1, 1), (-1, -1), (1, -1)):
            # quadrant disks of radius r / sqrt(2) cover the unit disk of radius r
            c = center + shape @ np.array([sx, sy]) * (0.5 * r)
            sub = cfg.with_ring(float(c[0]), (float(c[1]),), r / math.sqrt(2.0), k_mean)
            try:
                res = run(spec, sub, grid)
            except ZeroCrossing:
                continue
            if res.index != 0:
                found = (c, res)
                break
        if found is None:
            raise LostIndex("no sub-ring retains the index", r=r, level=levels)
        center, current = found
        r /= math.sqrt(2.0)
        k_mean = float(np.mean(current.k_n))
        levels += 1
    beta = float(center[0] + cfg.offset[0])
    delta = (float(center[1] + cfg.offset[1]),)
    return Localization(beta, delta, k_mean, r, levels)


def localize_bic(
    spec: StructureSpec, cfg: ProbeConfig, grid: Grid, depth: int, polish: int = 0
) -> Localization:
    """Shrink the probe around a nonzero index until the radius drops below 2**-depth * r.

    In case IV the interval is bisected on the sign of a_hat, then up to
    ``polish`` regula falsi steps refine the zero of a_hat inside the final
    bracket.  Cases II and III keep whichever quadrant sub-ring still carries
    a nonzero index.
    """
    if depth < 0 or polish < 0:
        raise InvalidParameter("depth and polish must be non-negative", depth=depth, polish=polish)
    if cfg.case == "IV":
        return _localize_case4(spec, cfg, grid, depth, polish)
    return _localize_ring(spec, cfg, grid, depth)


# ---- continuation ------------------------------------------------------------------


def continue_frequency(
    spec: StructureSpec,
    start: tuple[float, Sequence[float]],
    end: tuple[float, Sequence[float]],
    k_start: float,
    theta: float,
    grid: Grid,
    steps: int = 10,
    parity: int | None = None,
) -> list[tuple[float, tuple[float, ...], float]]:
    """Follow the tracked frequency along the straight path from ``start`` to ``end``."""
    if steps < 1:
        raise InvalidParameter("steps must be positive", steps=steps)
    b0, d0 = float(start[0]), np.asarray(start[1], dtype=float)
    b1, d1 = float(end[0]), np.asarray(end[1], dtype=float)
    k = float(k_start)
    path = []
    for j in range(steps + 1):
        s = j / steps
        beta = (1 - s) * b0 + s * b1
        delta = tuple(float(x) for x in (1 - s) * d0 + s * d1)
        k = eig_track(spec, beta, delta, k, theta, grid, TrackOptions(parity=parity)).k_star
        path.append((beta, delta, k))
    return path


__all__ = [
    "ProbeConfig",
    "ProbeResult",
    "Localization",
    "probe",
    "probe_case2",
    "probe_case3",
    "probe_case4",
    "localize_bic",
    "continue_frequency",
    "winding_real",
    "winding_complex",
    "index_case4",
    "reduce_pair",
    "track_ring",
    "align",
]
