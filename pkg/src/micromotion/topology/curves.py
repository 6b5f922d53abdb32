"""Preimage curves ``n^{-1}(target)`` traced through the cells of a periodic grid.

After rotating ``target`` onto ``+z``, the preimage is the set where
``n'_x = n'_y = 0`` with ``n'_z > 0``. On each cell face both components
are interpolated bilinearly and their common zero is solved exactly. The
sign of the face Jacobian says whether the curve crosses the face along
or against its normal, which both orients the curve and tells which of
the two neighbouring cells it leaves; crossings are then chained cell by
cell into closed polylines.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import OpenCurve, ResolutionError
from .field import PseudoSpinGrid

POLES = {"north": (0.0, 0.0, 1.0), "south": (0.0, 0.0, -1.0)}
TWO_PI = 2 * np.pi


@dataclass
class PreimageCurve:
    """Oriented polyline on the torus.

    ``points`` are wrapped into ``[0, 2 pi)^3``; ``unwrapped`` is the same
    sequence with minimal-image steps, so for a closed curve
    ``unwrapped[-1] + step -> unwrapped[0] + 2 pi * winding``.
    """

    points: np.ndarray
    unwrapped: np.ndarray
    closed: bool
    winding: tuple[int, int, int]
    cells: np.ndarray | None = None

    def __len__(self):
        return len(self.points)

    @property
    def contractible(self) -> bool:
        return self.closed and not any(self.winding)

    def max_step(self) -> float:
        closing = self.unwrapped[0] + TWO_PI * np.array(self.winding) - self.unwrapped[-1]
        steps = np.diff(np.vstack([self.unwrapped, self.unwrapped[-1] + closing]), axis=0)
        return float(np.max(np.linalg.norm(steps, axis=1)))


def rotation_to_north(target) -> np.ndarray:
    """Proper rotation ``R`` with ``R @ target = +z``."""
    t = np.asarray(target, dtype=float)
    t = t / np.linalg.norm(t)
    z = np.array([0.0, 0.0, 1.0])
    c = float(t @ z)
    if c < -1 + 1e-12:
        return np.diag([1.0, -1.0, -1.0])
    v = np.cross(t, z)
    vx = np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]])
    return np.eye(3) + vx + vx @ vx / (1 + c)


def _face_roots(fc, gc):
    """Common zeros in ``[0,1]^2`` of two bilinear functions given by corner values.

    Corners are ordered ``(0,0), (1,0), (1,1), (0,1)``.
    """
    a0, a1, a2, a3 = fc[0], fc[1] - fc[0], fc[3] - fc[0], fc[2] - fc[1] - fc[3] + fc[0]
    b0, b1, b2, b3 = gc[0], gc[1] - gc[0], gc[3] - gc[0], gc[2] - gc[1] - gc[3] + gc[0]
    # eliminate u between f = a0 + a1 u + a2 v + a3 uv and g likewise
    c2 = a2 * b3 - b2 * a3
    c1 = a0 * b3 + a2 * b1 - b0 * a3 - b2 * a1
    c0 = a0 * b1 - b0 * a1
    scale = max(abs(c2), abs(c1), abs(c0))
    if scale == 0.0:
        return None
    if abs(c2) < 1e-13 * scale:
        vs = [-c0 / c1] if abs(c1) > 1e-13 * scale else []
    else:
        disc = c1 * c1 - 4 * c2 * c0
        if disc < 0:
            return []
        sq = np.sqrt(disc)
        q = -0.5 * (c1 + np.copysign(sq, c1))
        vs = [q / c2, c0 / q] if q != 0 else [0.0]
    out = []
    for v in vs:
        if not -1e-12 <= v <= 1 + 1e-12:
            continue
        da, db = a1 + a3 * v, b1 + b3 * v
        if abs(da) >= abs(db):
            if da == 0:
                continue
            u = -(a0 + a2 * v) / da
        else:
            u = -(b0 + b2 * v) / db
        if not -1e-12 <= u <= 1 + 1e-12:
            continue
        u, v = min(max(u, 0.0), 1.0), min(max(v, 0.0), 1.0)
        jac = (a1 + a3 * v) * (b2 + b3 * u) - (a2 + a3 * u) * (b1 + b3 * v)
        out.append((u, v, jac))
    return out


def _crossings(nr: np.ndarray):
    """All face crossings: rows of (axis, node i, j, l, u, v, sign)."""
    dims = nr.shape[:3]
    rows = []
    for a in range(3):
        b, c = (a + 1) % 3, (a + 2) % 3
        corners = [nr, np.roll(nr, -1, b), np.roll(np.roll(nr, -1, b), -1, c), np.roll(nr, -1, c)]
        corners = np.stack(corners)  # (4, N1, N2, N3, 3)
        fx, fy, fz = corners[..., 0], corners[..., 1], corners[..., 2]
        cand = (
            (fx.min(0) <= 0) & (fx.max(0) >= 0) & (fy.min(0) <= 0) & (fy.max(0) >= 0) & (fz.max(0) > 0)
        )
        for idx in zip(*np.nonzero(cand)):
            fc, gc, hc = fx[(slice(None),) + idx], fy[(slice(None),) + idx], fz[(slice(None),) + idx]
            roots = _face_roots(fc, gc)
            if roots is None:
                raise ResolutionError(
                    "degenerate preimage: target value attained on a whole face",
                    face=(a,) + tuple(int(i) for i in idx),
                )
            for u, v, jac in roots:
                nz = hc[0] * (1 - u) * (1 - v) + hc[1] * u * (1 - v) + hc[2] * u * v + hc[3] * (1 - u) * v
                if nz <= 0 or jac == 0:
                    continue
                rows.append((a, *map(int, idx), u, v, 1 if jac > 0 else -1))
    del dims
    return rows


def preimage_curves(n: PseudoSpinGrid, pole="north", *, orientation: int = 1) -> list[PreimageCurve]:
    """Trace ``n^{-1}(pole)``; ``pole`` is ``"north"``, ``"south"`` or a 3-vector.

    Raises ``ResolutionError`` for degenerate faces (the target value held on
    a whole face) and ``OpenCurve`` when a crossing cannot be continued.
    """
    n.check_resolved()
    target = POLES[pole] if isinstance(pole, str) else pole
    nr = n.data @ rotation_to_north(target).T
    dims = np.array(n.dims)
    h = n.spacing
    off = np.array(n.offset)
    rows = _crossings(nr)
    if not rows:
        return []

    m = len(rows)
    pts = np.empty((m, 3))
    from_cell = np.empty((m, 3), dtype=int)
    to_cell = np.empty((m, 3), dtype=int)
    for r, (a, i, j, l, u, v, s) in enumerate(rows):
        b, c = (a + 1) % 3, (a + 2) % 3
        node = np.array([i, j, l])
        p = node + off
        p[b] += u
        p[c] += v
        pts[r] = (p * h) % TWO_PI
        s *= orientation
        lower = node.copy()
        lower[a] -= 1
        lower %= dims
        from_cell[r], to_cell[r] = (lower, node) if s > 0 else (node, lower)

    def key(cell):
        return tuple(int(x) for x in cell)

    leaving: dict[tuple, list[int]] = {}
    for r in range(m):
        leaving.setdefault(key(from_cell[r]), []).append(r)

    used = np.zeros(m, dtype=bool)
    curves = []
    for start in range(m):
        if used[start]:
            continue
        order = [start]
        used[start] = True
        cur = start
        while True:
            options = [r for r in leaving.get(key(to_cell[cur]), []) if not used[r] or r == start]
            if not options:
                raise OpenCurve(
                    f"preimage trace cannot leave cell {key(to_cell[cur])}",
                    cell=key(to_cell[cur]),
                )
            if len(options) > 1:
                d = pts[options] - pts[cur]
                d -= TWO_PI * np.rint(d / TWO_PI)
                options = [options[int(np.argmin(np.linalg.norm(d, axis=1)))]]
            nxt = options[0]
            if nxt == start:
                break
            used[nxt] = True
            order.append(nxt)
            cur = nxt
        curves.append(_assemble(pts[order], to_cell[order]))
    return curves


def _assemble(points: np.ndarray, cells: np.ndarray) -> PreimageCurve:
    steps = np.diff(np.vstack([points, points[:1]]), axis=0)
    steps -= TWO_PI * np.rint(steps / TWO_PI)
    unwrapped = points[0] + np.vstack([np.zeros(3), np.cumsum(steps[:-1], axis=0)])
    winding = tuple(int(w) for w in np.rint(steps.sum(axis=0) / TWO_PI))
    return PreimageCurve(points, unwrapped, True, winding, cells)


def curves_to_rows(curves: list[PreimageCurve]) -> list[tuple]:
    """Flatten for CSV: (curve, point, k1, k2, alpha, w1, w2, w3)."""
    rows = []
    for ci, cv in enumerate(curves):
        for pi, p in enumerate(cv.points):
            rows.append((ci, pi, *map(float, p), *cv.winding))
    return rows
