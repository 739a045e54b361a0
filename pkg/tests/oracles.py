"""Independent reference computations used by the tests."""

from __future__ import annotations

import math

import numpy as np


def _layer_profile(layers, d0, eps0):
    """Piecewise-constant eps on [-d0, d0] as a list of (x_low, x_high, eps), bottom to top."""
    cuts = {-d0, d0}
    for lo, hi, _ in layers:
        cuts.update((max(lo, -d0), min(hi, d0)))
    xs = sorted(cuts)
    out = []
    for lo, hi in zip(xs[:-1], xs[1:]):
        mid = 0.5 * (lo + hi)
        eps = eps0
        for a, b, e in layers:
            if a <= mid <= b:
                eps = e
        out.append((lo, hi, eps))
    return out


def _propagate(profile, q, k, w, dw):
    for lo, hi, eps in profile:
        kappa = np.sqrt(complex(k * k * eps - q * q))
        t = hi - lo
        if abs(kappa) < 1e-14:
            w, dw = w + t * dw, dw
        else:
            c, s = np.cos(kappa * t), np.sin(kappa * t)
            w, dw = c * w + s / kappa * dw, -kappa * s * w + c * dw
    return w, dw


def slab_smatrix(layers, d0, eps0, beta, k, order=0):
    """2x2 scattering matrix of one propagating order through layered eps(x2) by transfer matrices.

    Side L (top) first.  Column j holds the outgoing coefficients for unit
    incidence in channel j; mode amplitudes carry the alpha**-1/2 flux factor
    and phases are referenced to the box edges x2 = +-d0.
    """
    q = order + beta
    alpha = math.sqrt(k * k - q * q)
    norm = alpha ** -0.5

    def from_bottom(profile):
        # transmitted wave below the box with unit coefficient
        w, dw = _propagate(profile, q, k, norm + 0j, -1j * alpha * norm)
        # at the top: w = norm (a + b), dw = i alpha norm (b - a)
        a = 0.5 * (w / norm - dw / (1j * alpha * norm))
        b = 0.5 * (w / norm + dw / (1j * alpha * norm))
        return 1.0 / a, b / a  # transmission, reflection

    prof = _layer_profile(layers, d0, eps0)
    flipped = [(-hi, -lo, e) for lo, hi, e in reversed(prof)]
    t_down, r_top = from_bottom(prof)
    t_up, r_bottom = from_bottom(flipped)
    return np.array([[r_top, t_up], [t_down, r_bottom]])


def sector_phase_crossing(spec, beta, delta, k_center, theta, grid, parity, half=5e-3, step=5e-4):
    """Frequency near k_center where the parity-sector scalar of S equals exp(i theta).

    The sector eigenphase increases with k, so summing the increments taken
    in [0, 2 pi) unwraps it regardless of how sharp a resonance is.  Each
    unwrapped crossing of theta is counted; exactly one must lie in the
    window, which widens until it contains one.  Brent's method refines it.
    """
    from scipy.optimize import brentq

    from bicindex.smatrix import sector_matrix
    from bicindex.solver import Discretization

    def scalar(k):
        return complex(sector_matrix(Discretization(spec, beta, delta, k, grid), parity)[0, 0])

    while half <= 0.04:
        ks = np.arange(k_center - half, k_center + half + 0.5 * step, step)
        sv = np.array([scalar(k) for k in ks])
        inc = np.mod(np.angle(sv[1:] / sv[:-1]), 2.0 * math.pi)
        phi = np.angle(sv[0]) + np.concatenate([[0.0], np.cumsum(inc)])
        turns = np.floor((phi - theta) / (2.0 * math.pi))
        jumps = np.nonzero(np.diff(turns))[0]
        if len(jumps) == 1:
            j = int(jumps[0])
            target = theta + 2.0 * math.pi * turns[j + 1]

            def f(k):
                # increment from the left node, wrapped just below zero to absorb rounding
                return np.mod(np.angle(scalar(k) / sv[j]) + 0.1, 2.0 * math.pi) - 0.1 + phi[j] - target

            return brentq(f, ks[j], ks[j + 1], xtol=1e-15)
        if len(jumps) > 1:
            raise ValueError(f"{len(jumps)} crossings near k = {k_center}")
        half *= 2.0
    raise ValueError(f"no crossing near k = {k_center}")


def reduced_amplitude(spec, beta, delta, k, grid, parity):
    """|a_hat| of the unit-norm field excited by the incident vector [1, parity]."""
    from bicindex.solver import Discretization, l2_box, solve_scattering

    u = solve_scattering(Discretization(spec, beta, delta, k, grid), np.array([1.0, float(parity)]))
    return 1.0 / math.sqrt(l2_box(u).real)


def certify_nonvanishing(amplitude, radius, levels=4, cells=8, safety=1.5):
    """Quadtree check that a nonnegative sampled function has no zero on the disk |p| <= radius.

    Every square meeting the disk is sampled at its centre.  It passes when
    that value exceeds ``safety`` times the local slope times its half
    diagonal; the slope is the steepest difference quotient between samples
    near the square.  Failing squares split into four, at most ``levels``
    times.  Returns (certified, samples as (x, y, value) rows, worst value
    over bound ratio among the accepted squares).
    """
    pts, vals = [], []

    def sample(x, y):
        pts.append((x, y))
        vals.append(float(amplitude(x, y)))
        return vals[-1]

    def meets_disk(x, y, half):
        dx = max(abs(x) - half, 0.0)
        dy = max(abs(y) - half, 0.0)
        return dx * dx + dy * dy <= radius * radius

    side = 2.0 * radius / cells
    squares = [
        (-radius + (i + 0.5) * side, -radius + (j + 0.5) * side, 0.5 * side)
        for i in range(cells) for j in range(cells)
    ]
    squares = [s for s in squares if meets_disk(*s)]
    values = {s: sample(s[0], s[1]) for s in squares}
    worst = math.inf
    for level in range(levels + 1):
        xy = np.array(pts)
        v = np.array(vals)
        failing = []
        for x, y, half in squares:
            reach = 4.0 * half * math.sqrt(2.0)
            d = np.hypot(xy[:, 0] - x, xy[:, 1] - y)
            near = np.nonzero(d <= reach)[0]
            sub = xy[near]
            dist = np.hypot(sub[:, None, 0] - sub[None, :, 0], sub[:, None, 1] - sub[None, :, 1])
            mask = dist > 0
            slope = float(np.max(np.abs(v[near][:, None] - v[near][None])[mask] / dist[mask])) if mask.any() else 0.0
            bound = safety * slope * half * math.sqrt(2.0)
            if values[(x, y, half)] > bound:
                worst = min(worst, values[(x, y, half)] / bound if bound > 0 else math.inf)
            else:
                failing.append((x, y, half))
        if not failing:
            return True, np.column_stack([np.array(pts), np.array(vals)]), worst
        if level == levels:
            break
        squares = []
        for x, y, half in failing:
            for sx in (-0.5, 0.5):
                for sy in (-0.5, 0.5):
                    child = (x + sx * half, y + sy * half, 0.5 * half)
                    if meets_disk(*child):
                        squares.append(child)
                        values[child] = sample(child[0], child[1])
    return False, np.column_stack([np.array(pts), np.array(vals)]), worst
