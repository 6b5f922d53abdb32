"""Time-ordered evolution of two-band drives and Floquet effective Hamiltonians.

Unitaries are numpy arrays with trailing shape ``(2, 2)``; leading axes
broadcast with the momenta, so a whole Brillouin-zone grid is handled in
one call. Products are ordered with later times on the left.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BranchAmbiguity, GapClosing, NonConvergence

PAULI = np.array(
    [[[0, 1], [1, 0]], [[0, -1j], [1j, 0]], [[1, 0], [0, -1]]], dtype=complex
)
IDENTITY = np.eye(2, dtype=complex)

BRANCH_TOL = 1e-6
UNITARY_TOL = 1e-10
STEP_TOL = 1e-9
MAX_STEPS = 2**20
# cap on (time steps x momenta) materialised at once by the midpoint stepper
_CHUNK_BUDGET = 2**18


def bloch_matrix(h) -> np.ndarray:
    """``h . sigma`` for an array of Bloch vectors."""
    return np.einsum("...i,ijk->...jk", np.asarray(h, dtype=float), PAULI)


def dagger(u: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(u, -1, -2))


def unitarity_residual(u: np.ndarray) -> float:
    """Largest Frobenius norm of ``U^dagger U - 1`` over the batch."""
    d = dagger(u) @ u - np.eye(u.shape[-1])
    return float(np.max(np.sqrt(np.sum(np.abs(d) ** 2, axis=(-2, -1)))))


def wrap_phase(x):
    """Map angles into ``(-pi, pi]``."""
    return np.pi - np.mod(np.pi - np.asarray(x, dtype=float), 2 * np.pi)


def step_exponential(h, dt) -> np.ndarray:
    """Exact ``exp(-i dt h.sigma) = cos(|h|dt) - i sin(|h|dt) hhat.sigma``."""
    h = np.asarray(h, dtype=float)
    norm = np.sqrt(np.sum(h * h, axis=-1))
    phase = norm * dt
    c = np.cos(phase)
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(norm > 0, np.sin(phase) / norm, dt)
    sx, sy, sz = s * h[..., 0], s * h[..., 1], s * h[..., 2]
    u = np.empty(h.shape[:-1] + (2, 2), dtype=complex)
    u[..., 0, 0] = c - 1j * sz
    u[..., 0, 1] = -sy - 1j * sx
    u[..., 1, 0] = sy - 1j * sx
    u[..., 1, 1] = c + 1j * sz
    return u


def ordered_product(mats: np.ndarray) -> np.ndarray:
    """``mats[n-1] @ ... @ mats[0]`` by pairwise reduction along axis 0."""
    while mats.shape[0] > 1:
        if mats.shape[0] % 2:
            tail = mats[-1:]
            mats = np.concatenate([mats[1:-1:2] @ mats[:-1:2], tail])
        else:
            mats = mats[1::2] @ mats[0::2]
    return mats[0]


def _exact_pieces(drive, k1, k2, t_start: float, t_end: float) -> np.ndarray:
    """Product over the constant pieces of a piecewise-constant drive."""
    T = drive.period
    cuts = {t_start, t_end}
    n_lo = int(np.floor(t_start / T)) - 1
    n_hi = int(np.ceil(t_end / T)) + 1
    for n in range(n_lo, n_hi + 1):
        for s in drive.switch_times:
            t = n * T + s
            if t_start < t < t_end:
                cuts.add(t)
    cuts = sorted(cuts)
    shape = np.broadcast_shapes(np.shape(k1), np.shape(k2))
    u = np.broadcast_to(IDENTITY, shape + (2, 2)).copy()
    for a, b in zip(cuts[:-1], cuts[1:]):
        if b > a:
            u = step_exponential(drive.bloch(k1, k2, 0.5 * (a + b)), b - a) @ u
    return u


def _midpoint_product(drive, k1, k2, t_start: float, t_end: float, n_steps: int) -> np.ndarray:
    shape = np.broadcast_shapes(np.shape(k1), np.shape(k2))
    batch = int(np.prod(shape, dtype=int)) or 1
    dt = (t_end - t_start) / n_steps
    chunk = max(1, _CHUNK_BUDGET // batch)
    u = np.broadcast_to(IDENTITY, shape + (2, 2)).copy()
    for start in range(0, n_steps, chunk):
        idx = np.arange(start, min(start + chunk, n_steps))
        t_mid = (t_start + (idx + 0.5) * dt).reshape((-1,) + (1,) * len(shape))
        steps = step_exponential(drive.bloch(k1, k2, t_mid), dt)
        u = ordered_product(steps) @ u
    return u


def propagate(
    drive,
    k1,
    k2,
    t_start: float,
    t_end: float,
    n_steps: int = 256,
    *,
    adaptive: bool = True,
    tol: float = STEP_TOL,
    max_steps: int = MAX_STEPS,
) -> np.ndarray:
    """Time-ordered evolution ``U(t_end, t_start)`` for Bloch momenta ``(k1, k2)``.

    Piecewise-constant drives are multiplied out exactly, one exponential
    per constant piece. Smooth drives use the exponential midpoint rule;
    with ``adaptive`` the step count is doubled until successive
    unitaries agree elementwise to ``tol``.
    """
    if t_end < t_start:
        raise ValueError("t_end must not precede t_start")
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    if drive.switch_times is not None:
        return _exact_pieces(drive, k1, k2, float(t_start), float(t_end))
    u = _midpoint_product(drive, k1, k2, t_start, t_end, n_steps)
    if not adaptive or t_end == t_start:
        return u
    n = n_steps
    while True:
        if 2 * n > max_steps:
            raise NonConvergence(
                f"midpoint stepping not converged to {tol:g} within {max_steps} steps",
                n_steps=n,
            )
        n *= 2
        finer = _midpoint_product(drive, k1, k2, t_start, t_end, n)
        change = float(np.max(np.abs(finer - u)))
        u = finer
        if change < tol:
            return u


def alpha_to_time(drive, alpha):
    """Initial time ``alpha / omega`` for micro-motion phase ``alpha``."""
    return np.asarray(alpha, dtype=float) * drive.period / (2 * np.pi)


def micromotion_unitary(drive, k1, k2, alpha1: float, alpha2: float, **kw) -> np.ndarray:
    """Micro-motion ``U(alpha2, alpha1)``; the adjoint of the forward map when ``alpha2 < alpha1``."""
    t1 = float(alpha_to_time(drive, alpha1))
    t2 = float(alpha_to_time(drive, alpha2))
    if t2 >= t1:
        return propagate(drive, k1, k2, t1, t2, **kw)
    return dagger(propagate(drive, k1, k2, t2, t1, **kw))


def period_unitary(drive, k1, k2, alpha: float = 0.0, **kw) -> np.ndarray:
    t = float(alpha_to_time(drive, alpha))
    return propagate(drive, k1, k2, t, t + drive.period, **kw)


@dataclass
class EffectiveHamiltonian:
    """``H_F = offset + bloch . sigma`` with the principal log branch.

    ``phases`` holds ``eps*T`` for the ``+bloch`` and ``-bloch`` eigenvectors
    (last axis), each wrapped into ``(-pi, pi]``; ``axis`` is the unit
    direction of ``bloch`` (``z`` when the two phases coincide).
    """

    axis: np.ndarray
    phases: np.ndarray
    period: float
    alpha: float = 0.0

    @property
    def matrix(self) -> np.ndarray:
        p_up, p_dn = self.phases[..., 0], self.phases[..., 1]
        mean = (0.5 * (p_up + p_dn))[..., None, None]
        half = (0.5 * (p_up - p_dn))[..., None]
        return (mean * IDENTITY + bloch_matrix(half * self.axis)) / self.period

    @property
    def quasienergies(self) -> np.ndarray:
        return np.sort(self.phases, axis=-1) / self.period

    def unitary(self) -> np.ndarray:
        """``exp(-i H_F T)``."""
        up = np.exp(-1j * self.phases[..., 0])[..., None, None]
        dn = np.exp(-1j * self.phases[..., 1])[..., None, None]
        proj = 0.5 * bloch_matrix(self.axis)
        return up * (0.5 * IDENTITY + proj) + dn * (0.5 * IDENTITY - proj)

    @classmethod
    def from_unitary(cls, u, period: float, alpha: float = 0.0, branch_tol: float = BRANCH_TOL):
        """Principal logarithm of a batch of 2x2 unitaries.

        Writing ``U = exp(i g) (cos th - i sin th m.sigma)``, the eigenvector
        with ``m.sigma = s`` has eigenphase ``eps*T = s*th - g``.
        """
        u = np.asarray(u, dtype=complex)
        det = u[..., 0, 0] * u[..., 1, 1] - u[..., 0, 1] * u[..., 1, 0]
        g = 0.5 * np.angle(det)
        v = u * np.exp(-1j * g)[..., None, None]
        a0 = 0.5 * np.real(v[..., 0, 0] + v[..., 1, 1])
        b = -0.5 * np.imag(np.einsum("...jk,ikj->...i", v, PAULI))
        bn = np.linalg.norm(b, axis=-1)
        theta = np.arctan2(bn, a0)
        axis = np.where(
            (bn > 0)[..., None], b / np.where(bn > 0, bn, 1.0)[..., None], np.array([0.0, 0.0, 1.0])
        )
        phases = wrap_phase(np.stack([theta - g, -theta - g], axis=-1))
        near_cut = np.pi - np.abs(phases) < branch_tol
        if np.any(near_cut):
            bad = np.argwhere(np.any(near_cut, axis=-1))
            raise BranchAmbiguity(
                f"eigenphase within {branch_tol:g} of pi",
                index=tuple(int(i) for i in bad[0]) if bad.size else (),
            )
        return cls(axis=axis, phases=phases, period=period, alpha=alpha)

    @classmethod
    def from_matrix(cls, h, period: float, alpha: float = 0.0):
        """Wrap a Hermitian 2x2 matrix whose spectrum already lies in ``(-pi/T, pi/T]``."""
        h = np.asarray(h, dtype=complex)
        offset = 0.5 * np.real(h[..., 0, 0] + h[..., 1, 1])
        b = 0.5 * np.real(np.einsum("...jk,ikj->...i", h, PAULI))
        bn = np.linalg.norm(b, axis=-1)
        axis = np.where(
            (bn > 0)[..., None], b / np.where(bn > 0, bn, 1.0)[..., None], np.array([0.0, 0.0, 1.0])
        )
        phases = np.stack([offset + bn, offset - bn], axis=-1) * period
        return cls(axis=axis, phases=phases, period=period, alpha=alpha)


def effective_hamiltonian(drive, k1, k2, alpha: float = 0.0, *, branch_tol: float = BRANCH_TOL, **kw):
    """``H_F(alpha)`` defined by ``exp(-i H_F T) = U(alpha/omega + T, alpha/omega)``."""
    u = period_unitary(drive, k1, k2, alpha, **kw)
    return EffectiveHamiltonian.from_unitary(u, drive.period, alpha, branch_tol)


@dataclass
class BandState:
    eigenphase: np.ndarray
    eigenvector: np.ndarray
    pseudospin: np.ndarray
    period: float

    @property
    def quasienergy(self) -> np.ndarray:
        return self.eigenphase / self.period


def gauge_fixed_spinor(n) -> np.ndarray:
    """Spinor with ``<v|sigma|v> = n``, largest component real positive (first on ties)."""
    n = np.asarray(n, dtype=float)
    nx, ny, nz = n[..., 0], n[..., 1], n[..., 2]
    first = nz >= -1e-12
    a = np.where(first, 1 + nz, nx - 1j * ny)
    b = np.where(first, nx + 1j * ny, 1 - nz)
    v = np.stack([a, b], axis=-1)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def band_state(H: EffectiveHamiltonian, branch: str = "lower", gap_tol: float = BRANCH_TOL) -> BandState:
    """Select the eigenpair with eigenphase in ``(-pi, 0)`` (lower) or ``(0, pi]`` (upper)."""
    if branch not in ("lower", "upper"):
        raise ValueError(f"branch must be 'lower' or 'upper', got {branch!r}")
    ph = H.phases
    near = (np.abs(ph) < gap_tol) | (np.pi - np.abs(ph) < gap_tol)
    neg = ph < 0
    ambiguous = np.any(near, axis=-1) | (neg[..., 0] == neg[..., 1])
    if np.any(ambiguous):
        bad = np.argwhere(ambiguous)
        raise GapClosing(
            "band selection ambiguous: quasienergy gap at 0 or pi/T has closed",
            index=tuple(int(i) for i in bad[0]) if bad.size else (),
        )
    # s = +1 picks the +axis eigenvector (phase index 0)
    pick_up = neg[..., 0] if branch == "lower" else ~neg[..., 0]
    sign = np.where(pick_up, 1.0, -1.0)
    eigenphase = np.where(pick_up, ph[..., 0], ph[..., 1])
    n = sign[..., None] * H.axis
    return BandState(eigenphase, gauge_fixed_spinor(n), n, H.period)


def pauli_expectation(v) -> np.ndarray:
    v = np.asarray(v, dtype=complex)
    return np.real(np.einsum("...i,aij,...j->...a", np.conj(v), PAULI, v))


def alpha_grid_unitaries(
    drive,
    k1,
    k2,
    alphas,
    *,
    substeps: int = 16,
    tol: float = STEP_TOL,
    max_steps: int = MAX_STEPS,
) -> np.ndarray:
    """One-period unitaries started at each of the evenly spaced ``alphas``.

    Returns shape ``(len(alphas),) + kshape + (2, 2)``. Smooth drives are
    stepped once through a period with ``substeps`` midpoint steps per
    alpha interval (doubled until converged); the other starting phases
    follow by conjugation with the accumulated micro-motion, which is the
    same product regrouped.
    """
    alphas = np.asarray(alphas, dtype=float)
    if drive.switch_times is not None:
        return np.stack([period_unitary(drive, k1, k2, a) for a in alphas])
    n_alpha = len(alphas)
    t_first = float(alpha_to_time(drive, alphas[0]))
    T = drive.period

    def sweep(m):
        shape = np.broadcast_shapes(np.shape(k1), np.shape(k2))
        u = np.broadcast_to(IDENTITY, shape + (2, 2)).copy()
        marks = []
        for l in range(n_alpha):
            marks.append(u)
            a = t_first + l * T / n_alpha
            u = _midpoint_product(drive, k1, k2, a, a + T / n_alpha, m) @ u
        return np.stack(marks), u

    marks, full = sweep(substeps)
    m = substeps
    while True:
        if 2 * m * n_alpha > max_steps:
            raise NonConvergence(f"alpha-grid stepping not converged to {tol:g}", n_steps=m * n_alpha)
        m *= 2
        finer_marks, finer = sweep(m)
        change = float(np.max(np.abs(finer - full)))
        marks, full = finer_marks, finer
        if change < tol:
            break
    return marks @ full[None] @ dagger(marks)
