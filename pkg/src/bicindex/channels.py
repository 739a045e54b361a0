"""Diffraction-order bookkeeping for a quasi-periodic point (beta, k).

Order m has transverse wavenumber m + beta and longitudinal wavenumber
alpha_m = sqrt(k**2 - (m + beta)**2).  Propagating orders have alpha_m > 0;
evanescent orders take the decaying branch alpha_m = i*|alpha_m|.  Vectors of
channel coefficients are ordered side L (top, x2 > d0) first, then side R
(bottom, x2 < -d0), with ascending m inside each block.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CutoffDegenerate, DimensionMismatch, InvalidParameter

CUTOFF_RTOL = 1e-8


@dataclass(frozen=True)
class ChannelSet:
    """Channel data at one (beta, k); ``alpha`` is indexed by ``orders``."""

    beta: float
    k: float
    m_trunc: int
    orders: np.ndarray
    alpha: np.ndarray
    z0: tuple[int, ...]

    @property
    def n0(self) -> int:
        return len(self.z0)

    @property
    def alpha_z0(self) -> np.ndarray:
        """Real positive wavenumbers of the propagating orders, ascending m."""
        return np.array([self.alpha_of(m).real for m in self.z0])

    def alpha_of(self, m: int) -> complex:
        return complex(self.alpha[m + self.m_trunc])

    def normalization(self, m: int) -> complex:
        """Mode amplitude factor: alpha**-1/2 when propagating, 1 otherwise."""
        if m in self.z0:
            return self.alpha_of(m).real ** -0.5
        return 1.0


def longitudinal_wavenumber(k: float, q: np.ndarray | float) -> np.ndarray:
    """sqrt(k**2 - q**2) with the branch cut on the negative imaginary axis."""
    arg = k * k - np.asarray(q, dtype=float) ** 2
    return np.where(arg >= 0, np.sqrt(np.abs(arg)) + 0j, 1j * np.sqrt(np.abs(arg)))


def compute_channels(beta: float, k: float, m_trunc: int = 10) -> ChannelSet:
    """Propagating set and wavenumbers for orders -m_trunc..m_trunc."""
    beta = float(beta)
    k = float(k)
    if m_trunc < 1:
        raise InvalidParameter("m_trunc must be at least 1", m_trunc=m_trunc)
    if not k > abs(beta):
        raise InvalidParameter("frequency must exceed |beta|", beta=beta, k=k)
    orders = np.arange(-m_trunc, m_trunc + 1)
    q = orders + beta
    gap = np.abs(k - np.abs(q))
    tol = CUTOFF_RTOL * k
    if np.any(gap <= tol):
        m_bad = int(orders[np.argmin(gap)])
        raise CutoffDegenerate(
            "point sits on a Rayleigh cutoff", beta=beta, k=k, order=m_bad
        )
    alpha = longitudinal_wavenumber(k, q)
    z0 = tuple(int(m) for m in orders[k * k - q * q > 0])
    return ChannelSet(beta, k, int(m_trunc), orders, alpha, z0)


def translation_matrix(ch: ChannelSet, t: float) -> np.ndarray:
    """Block-diagonal phase matrix diag(exp(-i alpha_m t)) repeated for both sides."""
    phase = np.exp(-1j * ch.alpha_z0 * t)
    return np.diag(np.concatenate([phase, phase]))


def side_swap(n0: int) -> np.ndarray:
    """The block anti-identity exchanging the L and R halves."""
    eye = np.eye(n0)
    zero = np.zeros((n0, n0))
    return np.block([[zero, eye], [eye, zero]])


def permute(m: np.ndarray) -> np.ndarray:
    """Conjugate a 2n0 x 2n0 matrix by the side swap."""
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] % 2:
        raise DimensionMismatch("permute expects a square matrix of even size", shape=list(m.shape))
    n0 = m.shape[0] // 2
    idx = np.concatenate([np.arange(n0, 2 * n0), np.arange(n0)])
    return m[np.ix_(idx, idx)]


def rayleigh_gap(beta: float, k: float, m_trunc: int = 10) -> float:
    """Distance from k to the nearest Rayleigh cutoff |m + beta|."""
    q = np.arange(-m_trunc, m_trunc + 1) + beta
    return float(np.min(np.abs(k - np.abs(q))))


__all__ = [
    "ChannelSet",
    "compute_channels",
    "translation_matrix",
    "permute",
    "side_swap",
    "longitudinal_wavenumber",
    "rayleigh_gap",
]
