"""Chern number of the lower static band by lattice link variables."""

from __future__ import annotations

import numpy as np

from ..errors import GapClosing
from ..models import h_vector


def lower_band_spinor(h: np.ndarray) -> np.ndarray:
    """Eigenvector of ``h.sigma`` with eigenvalue ``-|h|``, shape ``(..., 2)``."""
    hn = np.linalg.norm(h, axis=-1)
    mat = np.empty(h.shape[:-1] + (2, 2), dtype=complex)
    mat[..., 0, 0] = h[..., 2]
    mat[..., 1, 1] = -h[..., 2]
    mat[..., 0, 1] = h[..., 0] - 1j * h[..., 1]
    mat[..., 1, 0] = h[..., 0] + 1j * h[..., 1]
    _, vecs = np.linalg.eigh(mat / np.where(hn > 0, hn, 1.0)[..., None, None])
    return vecs[..., :, 0]


def chern_number(mu: float, N: int = 64, gap_tol: float = 1e-9) -> int:
    """Integer Chern number of the lower band of ``h(k; mu).sigma`` on an ``N x N`` grid."""
    k = 2 * np.pi * np.arange(N) / N
    K1, K2 = np.meshgrid(k, k, indexing="ij")
    h = h_vector(K1, K2, mu)
    hn = np.linalg.norm(h, axis=-1)
    if np.min(hn) < gap_tol:
        idx = np.unravel_index(np.argmin(hn), hn.shape)
        raise GapClosing(f"static gap closes near k = {k[idx[0]]:.4f}, {k[idx[1]]:.4f}", mu=mu)
    v = lower_band_spinor(h)

    def link(axis):
        ov = np.sum(np.conj(v) * np.roll(v, -1, axis), axis=-1)
        return ov / np.abs(ov)

    u1, u2 = link(0), link(1)
    f = np.angle(u1 * np.roll(u2, -1, 0) / (np.roll(u1, -1, 1) * u2))
    return int(np.rint(f.sum() / (2 * np.pi)))
