"""Strip geometry: open along R1, periodic along R2 with momentum k2.

Sites are ordered ``x = 0 .. Nx-1`` with the two orbitals of a site
adjacent, so the matrix index is ``2 x + orbital``. The left edge is
``x = 0``.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg as sla

from .errors import GapClosing, NoEdgeMode, NonConvergence
from .floquet import PAULI, dagger, wrap_phase
from .models import GAP_TOL, HarmonicDrive, PiecewiseDrive, h_vector

logger = logging.getLogger(__name__)

SX, SY, SZ = PAULI
EDGE_THRESHOLD = 0.8
#: k1 samples used to Fourier-transform the flattened Bloch Hamiltonian
FOURIER_POINTS = 1024
STRIP_TOL = 1e-6
STRIP_MAX_STEPS = 2**13

# fourth-order (Yoshida) weights for composing symmetric second-order steps
_CBRT2 = 2 ** (1 / 3)
_YOSHIDA = (1 / (2 - _CBRT2), -_CBRT2 / (2 - _CBRT2), 1 / (2 - _CBRT2))


@dataclass
class StripHamiltonian:
    Nx: int
    k2: float
    matrix: np.ndarray

    def hermiticity_residual(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T)))


@dataclass
class SpectrumTable:
    """Quasienergies per k2 column, sorted ascending, with edge weights.

    ``vectors[i][:, b]`` is the eigenvector of band ``b`` at ``k2[i]`` when kept.
    """

    k2: np.ndarray
    quasienergy: np.ndarray
    w_left: np.ndarray
    w_right: np.ndarray
    period: float
    Nx: int
    edge_sites: int
    vectors: np.ndarray | None = None

    def rows(self):
        """(k2, band, quasienergy, w_left, w_right) in deterministic order."""
        for i, k in enumerate(self.k2):
            for b in range(self.quasienergy.shape[1]):
                yield (float(k), b, float(self.quasienergy[i, b]), float(self.w_left[i, b]), float(self.w_right[i, b]))


@dataclass
class EdgeMode:
    k2: float
    quasienergy: float
    side: str
    velocity: float
    weight: float
    column: int
    band: int


@dataclass
class EdgeProfile:
    probability: np.ndarray
    localization_length: float
    side: str
    quasienergy: float
    k2: float
    t0: float | None = None

    def rows(self):
        return [(x, float(p)) for x, p in enumerate(self.probability)]


def default_edge_sites(Nx: int) -> int:
    return max(4, Nx // 10)


def _check_sites(Nx: int):
    if Nx < 1:
        raise ValueError(f"need at least one site, got Nx={Nx}")


def build_strip_static(mu: float, lambda_z: float, Nx: int, k2: float) -> StripHamiltonian:
    """Open-boundary ``h(k; mu) . sigma`` (plus ``lambda_z sigma_z`` on site), nearest-neighbour only."""
    _check_sites(Nx)
    onsite = (mu + np.cos(k2) + lambda_z) * SZ + np.sin(k2) * SY
    hop = SX / 2j + 0.5 * (1 + np.cos(k2)) * SZ  # <x+1| H |x>
    H = np.kron(np.eye(Nx), onsite)
    if Nx > 1:
        H += np.kron(np.eye(Nx, k=-1), hop) + np.kron(np.eye(Nx, k=1), hop.conj().T)
    return StripHamiltonian(Nx, float(k2), H)


def flatten_strip(H: StripHamiltonian, eps0: float, gap_tol: float = GAP_TOL) -> StripHamiltonian:
    """``eps0 sgn(H)`` from the full eigendecomposition of the open-boundary matrix."""
    e, v = np.linalg.eigh(H.matrix)
    if np.min(np.abs(e)) <= gap_tol:
        raise GapClosing(f"strip eigenvalue {np.min(np.abs(e)):.3g} within gap tolerance", k2=H.k2)
    return StripHamiltonian(H.Nx, H.k2, (v * (eps0 * np.sign(e))) @ v.conj().T)


def flat_strip(mu: float, eps0: float, Nx: int, k2: float, n_k1: int = FOURIER_POINTS) -> StripHamiltonian:
    """Open-boundary restriction of the flattened Bloch Hamiltonian ``eps0 h.sigma/|h|``.

    The hoppings ``T_d`` are the Fourier coefficients of the flat
    ``H(k1)`` along R1; the strip keeps ``T_{x-y}`` for sites inside the
    strip and drops bonds that would leave it.
    """
    _check_sites(Nx)
    k1 = 2 * np.pi * np.arange(n_k1) / n_k1
    h = h_vector(k1, k2, mu)
    norm = np.linalg.norm(h, axis=-1)
    if np.min(norm) <= GAP_TOL:
        raise GapClosing(f"|h| vanishes along k2={k2:.4f}", k2=float(k2), mu=mu)
    Hk = np.einsum("ki,iab->kab", eps0 * h / norm[:, None], PAULI)
    # H(k1) = sum_d T_d exp(i k1 d)
    T = np.fft.fft(Hk, axis=0) / n_k1
    d = np.subtract.outer(np.arange(Nx), np.arange(Nx)) % n_k1
    blocks = T[d]  # (Nx, Nx, 2, 2)
    H = blocks.transpose(0, 2, 1, 3).reshape(2 * Nx, 2 * Nx)
    return StripHamiltonian(Nx, float(k2), 0.5 * (H + H.conj().T))


def _expm_hermitian(H: np.ndarray, t: float) -> np.ndarray:
    e, v = np.linalg.eigh(H)
    return (v * np.exp(-1j * e * t)[..., None, :]) @ dagger(v)


def _piecewise_partial(drive: PiecewiseDrive, H1, H2, tau: float) -> np.ndarray:
    """``U(tau, 0)`` for ``0 <= tau <= T``."""
    if tau <= drive.t0:
        return _expm_hermitian(H1, tau)
    return _expm_hermitian(H2, tau - drive.t0) @ _expm_hermitian(H1, drive.t0)


def _piecewise_unitary(drive: PiecewiseDrive, Nx, k2, alpha, flat):
    H1 = build_strip_static(drive.mu1, 0.0, Nx, k2).matrix
    if flat == "fourier":
        H2 = flat_strip(drive.mu2, drive.eps0, Nx, k2).matrix
    else:
        H2 = flatten_strip(build_strip_static(drive.mu2, 0.0, Nx, k2), drive.eps0).matrix
    U = _expm_hermitian(H2, drive.period - drive.t0) @ _expm_hermitian(H1, drive.t0)
    tau = float(np.mod(alpha, 2 * np.pi)) * drive.period / (2 * np.pi)
    if tau > 0:
        W = _piecewise_partial(drive, H1, H2, tau)
        U = W @ U @ dagger(W)
    return U


class _HarmonicStepper:
    """Fourth-order splitting for ``H0 + cos(omega t) Z``, batched over k2."""

    def __init__(self, drive: HarmonicDrive, Nx: int, k2s: np.ndarray):
        H0 = np.stack([build_strip_static(drive.mu, 0.0, Nx, k).matrix for k in k2s])
        self.e, self.v = np.linalg.eigh(H0)
        self.vd = dagger(self.v)
        self.z = np.tile([1.0, -1.0], Nx)
        self.omega = drive.omega
        self.dim = 2 * Nx

    def _half(self, dt):
        return (self.v * np.exp(-0.5j * self.e * dt)[..., None, :]) @ self.vd

    def evolve(self, t_start: float, t_end: float, n_steps: int) -> np.ndarray:
        h = (t_end - t_start) / n_steps
        subs = [w * h for w in _YOSHIDA]
        outer, inner = self._half(subs[0]), self._half(subs[1])
        a = [outer, inner, outer]
        # free half-steps either side of a kick commute, so neighbours merge
        joins = [a[0] @ a[1], a[1] @ a[2], a[2] @ a[0]]
        U = a[0].copy()
        t = t_start
        for step in range(n_steps):
            for j, s in enumerate(subs):
                kick = np.exp(-1j * np.cos(self.omega * (t + 0.5 * s)) * self.z * s)
                U = kick[..., :, None] * U
                t += s
                last = step == n_steps - 1 and j == 2
                U = (a[2] if last else joins[j]) @ U
        return U


def _harmonic_unitary(drive: HarmonicDrive, Nx, k2s, alpha, tol, max_steps, n_steps=None):
    stepper = _HarmonicStepper(drive, Nx, k2s)
    T = drive.period
    if n_steps is None:
        m = 16
        U = stepper.evolve(0.0, T, m)
        while True:
            if 2 * m > max_steps:
                raise NonConvergence(f"strip stepping not converged to {tol:g}", n_steps=m)
            m *= 2
            finer = stepper.evolve(0.0, T, m)
            change = float(np.max(np.abs(finer - U)))
            U = finer
            if change < tol:
                break
        logger.debug("harmonic strip converged with %d steps (change %.2e)", m, change)
    else:
        m = n_steps
        U = stepper.evolve(0.0, T, m)
    tau = float(np.mod(alpha, 2 * np.pi)) * T / (2 * np.pi)
    if tau > 0:
        W = stepper.evolve(0.0, tau, max(1, int(np.ceil(m * tau / T))))
        U = W @ U @ dagger(W)
    return U


def strip_period_unitary(
    drive,
    Nx: int,
    k2,
    *,
    alpha: float = 0.0,
    flat: str = "fourier",
    tol: float = STRIP_TOL,
    max_steps: int = STRIP_MAX_STEPS,
    n_steps: int | None = None,
    threads: int = 1,
) -> np.ndarray:
    """One-period strip unitary started at phase ``alpha``; batched when ``k2`` is an array.

    For Model I ``flat`` selects the flat segment: ``"fourier"`` (open
    restriction of the flattened Bloch Hamiltonian, default) or
    ``"spectral"`` (``eps0 sgn(H)`` of the open strip). Model II is
    stepped with a fourth-order splitting, doubling the step count until
    the unitary changes by less than ``tol``.
    """
    scalar = np.ndim(k2) == 0
    k2s = np.atleast_1d(np.asarray(k2, dtype=float))
    if flat not in ("fourier", "spectral"):
        raise ValueError("flat must be 'fourier' or 'spectral'")

    if isinstance(drive, PiecewiseDrive):
        def work(ks):
            return np.stack([_piecewise_unitary(drive, Nx, k, alpha, flat) for k in ks])
    elif isinstance(drive, HarmonicDrive):
        def work(ks):
            return _harmonic_unitary(drive, Nx, ks, alpha, tol, max_steps, n_steps)
    else:
        raise TypeError(f"no strip realisation for {type(drive).__name__}")

    if threads > 1 and len(k2s) > 1:
        chunks = np.array_split(k2s, min(threads, len(k2s)))
        with ThreadPoolExecutor(threads) as pool:
            U = np.concatenate(list(pool.map(work, chunks)))
    else:
        U = work(k2s)
    return U[0] if scalar else U


def edge_weights(vectors: np.ndarray, Nx: int, W: int):
    """Probability on the outermost ``W`` sites at each end, per eigenvector column."""
    p = (np.abs(vectors) ** 2).reshape(vectors.shape[:-2] + (Nx, 2, -1)).sum(axis=-2)
    return p[..., :W, :].sum(axis=-2), p[..., -W:, :].sum(axis=-2)


def _eig_unitary(U: np.ndarray):
    """Eigenphases and an orthonormal eigenbasis of a unitary via complex Schur form."""
    Tm, Z = sla.schur(U, output="complex")
    return np.angle(np.diag(Tm)), Z


def quasienergy_spectrum(
    drive,
    Nx: int,
    n_k2: int = 121,
    *,
    alpha: float = 0.0,
    edge_sites: int | None = None,
    keep_vectors: bool = True,
    threads: int = 1,
    **kw,
) -> SpectrumTable:
    """Strip quasienergies on ``n_k2`` evenly spaced ``k2`` in ``[-pi, pi]`` (both ends included)."""
    W = default_edge_sites(Nx) if edge_sites is None else edge_sites
    k2 = np.linspace(-np.pi, np.pi, n_k2)
    U = strip_period_unitary(drive, Nx, k2, alpha=alpha, threads=threads, **kw)
    T = drive.period
    eps = np.empty((n_k2, 2 * Nx))
    vecs = np.empty((n_k2, 2 * Nx, 2 * Nx), dtype=complex)
    for i in range(n_k2):
        ph, Z = _eig_unitary(U[i])
        q = wrap_phase(-ph) / T
        order = np.argsort(q, kind="stable")
        eps[i], vecs[i] = q[order], Z[:, order]
    wl, wr = edge_weights(vecs, Nx, W)
    return SpectrumTable(k2, eps, wl, wr, T, Nx, W, vecs if keep_vectors else None)


def _gap_center(gap, period: float) -> float:
    if gap in (0, "0", "zero"):
        return 0.0
    if gap in ("pi", "pi/T", np.pi):
        return np.pi / period
    return float(gap)


def _circ(d, period):
    """Quasienergy difference wrapped to ``(-pi/T, pi/T]``."""
    return wrap_phase(np.asarray(d) * period) / period


def edge_modes(
    spec: SpectrumTable,
    gap="0",
    window: float | None = None,
    threshold: float = EDGE_THRESHOLD,
) -> list[EdgeMode]:
    """Edge-localised states within ``window`` of the gap centre, with branch velocities.

    ``window`` defaults to ``0.1 pi/T``. The velocity ``d eps/d k2`` is a
    central difference along the branch, continued into the neighbouring
    columns by nearest quasienergy among states on the same edge, with
    eigenvector overlap breaking near-ties.
    """
    T = spec.period
    centre = _gap_center(gap, T)
    window = 0.1 * np.pi / T if window is None else window
    n = len(spec.k2)
    periodic = n > 2 and np.isclose(spec.k2[-1] - spec.k2[0], 2 * np.pi)
    modes = []
    for i in range(n):
        dist = np.abs(_circ(spec.quasienergy[i] - centre, T))
        weight = np.maximum(spec.w_left[i], spec.w_right[i])
        for b in np.flatnonzero((dist < window) & (weight > threshold)):
            side = "left" if spec.w_left[i, b] >= spec.w_right[i, b] else "right"
            modes.append(
                EdgeMode(
                    float(spec.k2[i]),
                    float(spec.quasienergy[i, b]),
                    side,
                    _velocity(spec, i, b, side, periodic),
                    float(weight[b]),
                    i,
                    int(b),
                )
            )
    return modes


def _neighbour(spec: SpectrumTable, i: int, step: int, periodic: bool):
    n = len(spec.k2)
    j = i + step
    dk = spec.k2[min(max(j, 0), n - 1)] - spec.k2[i]
    if 0 <= j < n:
        return j, dk
    if not periodic:
        return None, 0.0
    # the grid repeats its first point at the far end
    j = j + (n - 1) if j < 0 else j - (n - 1)
    return j, step * (spec.k2[1] - spec.k2[0])


def _follow(spec: SpectrumTable, i: int, b: int, j: int, side: str) -> int:
    T = spec.period
    ws = spec.w_left[j] if side == "left" else spec.w_right[j]
    cand = np.flatnonzero(ws > 0.5 * EDGE_THRESHOLD)
    if cand.size == 0:
        cand = np.arange(spec.quasienergy.shape[1])
    d = np.abs(_circ(spec.quasienergy[j, cand] - spec.quasienergy[i, b], T))
    order = np.argsort(d, kind="stable")
    best = cand[order[0]]
    if spec.vectors is not None and order.size > 1:
        second = cand[order[1]]
        if d[order[1]] < 1.5 * d[order[0]] + 1e-12:
            ov = np.abs(spec.vectors[j][:, [best, second]].conj().T @ spec.vectors[i][:, b]) ** 2
            best = (best, second)[int(np.argmax(ov))]
    return int(best)


def _velocity(spec: SpectrumTable, i: int, b: int, side: str, periodic: bool) -> float:
    T = spec.period
    e0 = spec.quasienergy[i, b]
    pts = []
    for step in (-1, 1):
        j, dk = _neighbour(spec, i, step, periodic)
        if j is not None:
            pts.append((dk, spec.quasienergy[j, _follow(spec, i, b, j, side)]))
    if not pts:
        return 0.0
    if len(pts) == 2:
        (dk0, e_lo), (dk1, e_hi) = pts
        return float(_circ(e_hi - e_lo, T) / (dk1 - dk0))
    dk, e = pts[0]
    return float(_circ(e - e0, T) / dk)


def _profile_of(vec: np.ndarray, Nx: int) -> np.ndarray:
    p = (np.abs(vec) ** 2).reshape(Nx, 2).sum(axis=1)
    return p / p.sum()


def fit_localization(p: np.ndarray, side: str) -> float:
    """``xi`` from ``|psi|^2 ~ exp(-2 x/xi)`` over sites 2 .. Nx/3 from the edge."""
    q = p if side == "left" else p[::-1]
    Nx = len(q)
    x = np.arange(1, max(Nx // 3, 3))
    y = np.log(np.maximum(q[x], np.finfo(float).tiny))
    slope = np.polyfit(x, y, 1)[0]
    return float(-2.0 / slope) if slope < 0 else float("inf")


def edge_profile(
    drive,
    Nx: int,
    k2_star: float,
    gap="auto",
    *,
    window: float | None = None,
    threshold: float = EDGE_THRESHOLD,
    edge_sites: int | None = None,
    **kw,
) -> EdgeProfile:
    """Most edge-localised in-gap state at ``k2_star`` and its exponential decay length.

    ``gap="auto"`` searches both gap windows and keeps the state with the
    largest edge weight.
    """
    T = drive.period
    W = default_edge_sites(Nx) if edge_sites is None else edge_sites
    window = 0.1 * np.pi / T if window is None else window
    U = strip_period_unitary(drive, Nx, float(k2_star), **kw)
    ph, Z = _eig_unitary(U)
    q = wrap_phase(-ph) / T
    wl, wr = edge_weights(Z, Nx, W)
    weight = np.maximum(wl, wr)
    centres = [0.0, np.pi / T] if gap == "auto" else [_gap_center(gap, T)]
    near = np.zeros(len(q), dtype=bool)
    for c in centres:
        near |= np.abs(_circ(q - c, T)) < window
    ok = near & (weight > threshold)
    if not ok.any():
        raise NoEdgeMode(
            f"no state with edge weight > {threshold} in the gap window at k2={k2_star:.4f}",
            k2=float(k2_star),
            t0=getattr(drive, "t0", None),
        )
    b = int(np.flatnonzero(ok)[np.argmax(weight[ok])])
    side = "left" if wl[b] >= wr[b] else "right"
    p = _profile_of(Z[:, b], Nx)
    return EdgeProfile(p, fit_localization(p, side), side, float(q[b]), float(k2_star), getattr(drive, "t0", None))


def localization_length(drive: PiecewiseDrive, t0_values, Nx: int, k2_star: float, **kw):
    """Table ``[(t0, xi)]`` of edge-state decay lengths as the first segment grows."""
    table = []
    for t0 in t0_values:
        prof = edge_profile(replace(drive, t0=float(t0)), Nx, k2_star, **kw)
        table.append((float(t0), prof.localization_length))
    return table


def alpha_flatness_check(drive, Nx: int, k2: float, alpha_list, **kw) -> float:
    """Largest eigenphase mismatch between strip unitaries started at different ``alpha``."""
    phases = []
    for a in alpha_list:
        ph, _ = _eig_unitary(strip_period_unitary(drive, Nx, float(k2), alpha=float(a), **kw))
        phases.append(np.sort(wrap_phase(ph)))
    worst = 0.0
    for i in range(len(phases)):
        for j in range(i + 1, len(phases)):
            d = np.abs(wrap_phase(phases[i][:, None] - phases[j][None, :]))
            worst = max(worst, float(np.max(d.min(axis=1))), float(np.max(d.min(axis=0))))
    return worst
