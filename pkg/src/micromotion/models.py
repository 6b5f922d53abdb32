"""Two-band Bloch vectors and the two drive protocols.

All functions broadcast over array-valued momenta; a Bloch vector is an
array whose last axis holds ``(hx, hy, hz)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GapClosing

GAP_TOL = 1e-9


def h_vector(k1, k2, mu: float) -> np.ndarray:
    """Bloch vector ``(sin k1, sin k2, mu + cos k1 + cos k2 + cos k1 cos k2)``."""
    k1, k2 = np.broadcast_arrays(np.asarray(k1, dtype=float), np.asarray(k2, dtype=float))
    c1, c2 = np.cos(k1), np.cos(k2)
    return np.stack([np.sin(k1), np.sin(k2), mu + c1 + c2 + c1 * c2], axis=-1)


def flatten(h, eps0: float, gap_tol: float = GAP_TOL) -> np.ndarray:
    """Rescale ``h`` to norm ``eps0``; raises :class:`GapClosing` at ``|h| <= gap_tol``."""
    h = np.asarray(h, dtype=float)
    norm = np.linalg.norm(h, axis=-1, keepdims=True)
    if np.any(norm <= gap_tol):
        bad = np.argwhere(norm[..., 0] <= gap_tol)
        raise GapClosing(
            f"|h| <= {gap_tol:g} at {len(bad)} point(s)",
            index=tuple(int(i) for i in bad[0]) if bad.size else (),
        )
    return eps0 * h / norm


@dataclass(frozen=True)
class PiecewiseDrive:
    """Model I: ``h(mu1)`` on ``(nT, nT+t0]``, flattened ``h(mu2)`` on ``(nT+t0, (n+1)T]``.

    The flat segment uses ``eps0 = pi/(T - t0)`` so that it evolves every
    Bloch state by exactly ``-1`` over its duration.
    """

    mu1: float
    mu2: float
    t0: float
    period: float = 1.0
    gap_tol: float = GAP_TOL

    def __post_init__(self):
        if not 0.0 < self.t0 < self.period:
            raise ValueError(f"need 0 < t0 < T, got t0={self.t0}, T={self.period}")

    @property
    def eps0(self) -> float:
        return np.pi / (self.period - self.t0)

    @property
    def omega(self) -> float:
        return 2 * np.pi / self.period

    @property
    def switch_times(self) -> tuple[float, ...]:
        return (0.0, self.t0)

    def reduce_time(self, t):
        return np.mod(t, self.period)

    def bloch(self, k1, k2, t) -> np.ndarray:
        tau = np.asarray(self.reduce_time(t))
        first = (tau > 0.0) & (tau <= self.t0)
        if first.ndim == 0:
            if first:
                return h_vector(k1, k2, self.mu1)
            return flatten(h_vector(k1, k2, self.mu2), self.eps0, self.gap_tol)
        h1 = h_vector(k1, k2, self.mu1)
        h2 = flatten(h_vector(k1, k2, self.mu2), self.eps0, self.gap_tol)
        return np.where(first[..., None], h1, h2)


@dataclass(frozen=True)
class HarmonicDrive:
    """Model II: ``h(k) . sigma + cos(omega t) sigma_z`` with ``T = 2 pi/omega``."""

    mu: float
    omega: float

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError(f"omega must be positive, got {self.omega}")

    @property
    def period(self) -> float:
        return 2 * np.pi / self.omega

    switch_times = None

    def reduce_time(self, t):
        return np.mod(t, self.period)

    def bloch(self, k1, k2, t) -> np.ndarray:
        h = h_vector(k1, k2, self.mu)
        return h + np.cos(self.omega * np.asarray(t, dtype=float))[..., None] * np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class ConstantDrive:
    """Momentum- and time-independent ``h . sigma``; a test fixture for the Floquet layer."""

    h: tuple[float, float, float]
    period: float = 1.0

    @property
    def omega(self) -> float:
        return 2 * np.pi / self.period

    switch_times = (0.0,)

    def reduce_time(self, t):
        return np.mod(t, self.period)

    def bloch(self, k1, k2, t) -> np.ndarray:
        shape = np.broadcast_shapes(np.shape(k1), np.shape(k2))
        return np.broadcast_to(np.asarray(self.h, dtype=float), shape + (3,)).copy()


def hamiltonian_at(drive, k1, k2, t) -> np.ndarray:
    """Instantaneous Bloch vector of ``drive`` at time ``t``."""
    return drive.bloch(k1, k2, t)
