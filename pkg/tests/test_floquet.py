from __future__ import annotations

import numpy as np
import pytest
import scipy.linalg as sl

from micromotion.errors import BranchAmbiguity, GapClosing
from micromotion.floquet import (
    EffectiveHamiltonian,
    _midpoint_product,
    band_state,
    bloch_matrix,
    dagger,
    effective_hamiltonian,
    micromotion_unitary,
    pauli_expectation,
    period_unitary,
    propagate,
    step_exponential,
    unitarity_residual,
)
from micromotion.models import ConstantDrive, HarmonicDrive, PiecewiseDrive, h_vector

SIGMA_Z = np.diag([1.0, -1.0]).astype(complex)

MODEL_I = PiecewiseDrive(mu1=-10, mu2=-2, t0=0.1)
MODEL_II = HarmonicDrive(mu=-2, omega=4)


def frob(a):
    return float(np.sqrt(np.sum(np.abs(a) ** 2)))


def test_step_exponential_examples():
    np.testing.assert_allclose(step_exponential((0, 0, 1), np.pi / 2), -1j * SIGMA_Z, atol=1e-15)
    np.testing.assert_array_equal(step_exponential((0, 0, 0), 3.7), np.eye(2))
    rng = np.random.default_rng(0)
    d = PiecewiseDrive(-10, -5, t0=0.1)
    for _ in range(5):
        hhat = rng.normal(size=3)
        hhat /= np.linalg.norm(hhat)
        u = step_exponential(d.eps0 * hhat, d.period - d.t0)
        np.testing.assert_allclose(u, -np.eye(2), atol=1e-14)


def test_step_exponential_matches_expm():
    rng = np.random.default_rng(1)
    for _ in range(10):
        h = rng.normal(size=3) * 3
        dt = rng.uniform(-2, 2)
        np.testing.assert_allclose(
            step_exponential(h, dt), sl.expm(-1j * dt * bloch_matrix(h)), atol=1e-13
        )


def test_piecewise_period_is_minus_h1_segment():
    k1, k2 = 0.3, 1.2
    u = propagate(MODEL_I, k1, k2, 0.0, 1.0)
    oracle = -sl.expm(-1j * 0.1 * bloch_matrix(h_vector(k1, k2, -10)))
    np.testing.assert_allclose(u, oracle, atol=1e-13)


@pytest.mark.parametrize("drive", [MODEL_I, MODEL_II])
def test_vanishing_interval(drive):
    np.testing.assert_allclose(propagate(drive, 0.4, 2.0, 0.3, 0.3), np.eye(2), atol=1e-10)
    np.testing.assert_allclose(propagate(drive, 0.4, 2.0, 0.3, 0.3 + 1e-13), np.eye(2), atol=1e-10)


def test_harmonic_self_convergence_at_gamma():
    d = HarmonicDrive(mu=-10, omega=12)
    phases = []
    for n in (2**12, 2**13):
        u = propagate(d, 0.0, 0.0, 0.0, d.period, n, adaptive=False)
        phases.append(np.sort(np.angle(np.linalg.eigvals(u))))
    assert np.max(np.abs(phases[0] - phases[1])) < 1e-9


def test_adaptive_stepping_converges_generic_k():
    fine = propagate(MODEL_II, 0.7, 2.1, 0.0, MODEL_II.period, 2**18, adaptive=False)
    adaptive = propagate(MODEL_II, 0.7, 2.1, 0.0, MODEL_II.period)
    assert frob(fine - adaptive) < 1e-9


def test_micromotion_identity_and_full_period():
    for d in (MODEL_I, MODEL_II):
        np.testing.assert_allclose(micromotion_unitary(d, 0.5, 1.0, 1.3, 1.3), np.eye(2), atol=1e-12)
        np.testing.assert_allclose(
            micromotion_unitary(d, 0.5, 1.0, 0.0, 2 * np.pi), period_unitary(d, 0.5, 1.0, 0.0), atol=1e-12
        )


def test_micromotion_backwards_is_adjoint():
    fwd = micromotion_unitary(MODEL_II, 0.5, 1.0, 0.4, 2.0)
    back = micromotion_unitary(MODEL_II, 0.5, 1.0, 2.0, 0.4)
    np.testing.assert_allclose(back, dagger(fwd), atol=1e-14)


@pytest.mark.parametrize("drive", [MODEL_I, MODEL_II])
def test_period_unitary_conjugation(drive):
    rng = np.random.default_rng(7)
    for _ in range(4):
        k1, k2 = rng.uniform(0, 2 * np.pi, 2)
        a1, a2 = rng.uniform(0, 2 * np.pi, 2)
        lhs = period_unitary(drive, k1, k2, a1)
        mm = micromotion_unitary(drive, k1, k2, a1, a2)
        rhs = dagger(mm) @ period_unitary(drive, k1, k2, a2) @ mm
        assert frob(lhs - rhs) < 1e-8


def test_constant_drive_effective_hamiltonian_is_h():
    h = (0.3, -0.4, 0.9)
    d = ConstantDrive(h, period=1.0)
    for alpha in (0.0, 1.0, 4.0):
        H = effective_hamiltonian(d, 0.0, 0.0, alpha)
        np.testing.assert_allclose(H.matrix, bloch_matrix(h), atol=1e-14)


def test_piecewise_alpha_zero_eigenvectors_are_h1():
    rng = np.random.default_rng(3)
    for _ in range(5):
        k1, k2 = rng.uniform(0, 2 * np.pi, 2)
        H = effective_hamiltonian(MODEL_I, k1, k2, 0.0)
        _, vecs = np.linalg.eigh(bloch_matrix(h_vector(k1, k2, -10)))
        _, vf = np.linalg.eigh(H.matrix)
        overlap = np.abs(np.conj(vecs).T @ vf)
        # same eigenbasis, order swapped by the global -1
        np.testing.assert_allclose(np.sort(overlap.ravel()), [0, 0, 1, 1], atol=1e-12)
        # quasienergies are those of t0*H1/T shifted by pi/T
        e1 = np.linalg.norm(h_vector(k1, k2, -10)) * 0.1
        np.testing.assert_allclose(np.sort(np.abs(H.quasienergies)), [np.pi - e1] * 2, atol=1e-12)


@pytest.mark.parametrize("drive", [MODEL_I, MODEL_II])
def test_effective_hamiltonian_periodic_in_alpha(drive):
    a = effective_hamiltonian(drive, 1.1, 2.3, 0.0).matrix
    b = effective_hamiltonian(drive, 1.1, 2.3, 2 * np.pi).matrix
    assert np.max(np.abs(a - b)) < 1e-9


@pytest.mark.parametrize("drive", [MODEL_I, MODEL_II])
def test_effective_hamiltonian_reproduces_period_unitary(drive):
    u = period_unitary(drive, 2.0, 0.4, 1.0)
    H = effective_hamiltonian(drive, 2.0, 0.4, 1.0)
    np.testing.assert_allclose(sl.expm(-1j * drive.period * H.matrix), u, atol=1e-8)
    np.testing.assert_allclose(H.unitary(), u, atol=1e-12)
    assert np.max(np.abs(H.matrix - dagger(H.matrix))) < 1e-10


def test_branch_cut_detection():
    d = ConstantDrive((0, 0, np.pi - 1e-8), period=1.0)
    with pytest.raises(BranchAmbiguity):
        effective_hamiltonian(d, 0.0, 0.0)


def test_band_state_diagonal():
    H = EffectiveHamiltonian.from_matrix(SIGMA_Z, period=1.0)
    low = band_state(H, "lower")
    np.testing.assert_allclose(low.eigenvector, [0, 1], atol=1e-15)
    assert low.eigenphase == pytest.approx(-1.0)
    up = band_state(H, "upper")
    np.testing.assert_allclose(up.eigenvector, [1, 0], atol=1e-15)


def test_band_state_ambiguous_gap():
    H = EffectiveHamiltonian.from_matrix(np.eye(2) * 0.5, period=1.0)
    with pytest.raises(GapClosing):
        band_state(H, "lower")


@pytest.mark.parametrize("drive", [MODEL_I, MODEL_II])
def test_band_state_phases_sum_to_det_phase(drive):
    rng = np.random.default_rng(11)
    for _ in range(5):
        k1, k2, a = rng.uniform(0, 2 * np.pi, 3)
        u = period_unitary(drive, k1, k2, a)
        H = EffectiveHamiltonian.from_unitary(u, drive.period)
        lo, hi = band_state(H, "lower"), band_state(H, "upper")
        # U = exp(-i H_F T): eigenvalue phases are minus the eigenphases
        total = -(lo.eigenphase + hi.eigenphase)
        diff = np.angle(np.exp(1j * (total - np.angle(np.linalg.det(u)))))
        assert abs(diff) < 1e-12


def test_band_state_eigen_equation_and_gauge():
    rng = np.random.default_rng(5)
    k1, k2 = rng.uniform(0, 2 * np.pi, (2, 50))
    H = effective_hamiltonian(MODEL_I, k1, k2, 2.5)
    st = band_state(H, "lower")
    hv = np.einsum("...ij,...j->...i", H.matrix, st.eigenvector)
    np.testing.assert_allclose(hv, st.quasienergy[:, None] * st.eigenvector, atol=1e-12)
    np.testing.assert_allclose(np.linalg.norm(st.eigenvector, axis=-1), 1.0, atol=1e-14)
    big = np.argmax(np.abs(st.eigenvector), axis=-1)
    lead = np.take_along_axis(st.eigenvector, big[:, None], axis=-1)[:, 0]
    assert np.all(np.abs(lead.imag) < 1e-14) and np.all(lead.real > 0)
    np.testing.assert_allclose(pauli_expectation(st.eigenvector), st.pseudospin, atol=1e-12)


def _worst_overlap_deficit(n):
    g = 2 * np.pi * np.arange(n) / n
    k1, k2 = np.meshgrid(g, g, indexing="ij")
    vecs = np.stack(
        [band_state(effective_hamiltonian(MODEL_I, k1, k2, a), "lower").eigenvector for a in g], axis=2
    )
    worst = 0.0
    for ax in range(3):
        ov = np.abs(np.sum(np.conj(vecs) * np.roll(vecs, -1, axis=ax), axis=-1)) ** 2
        worst = max(worst, float(np.max(1 - ov)))
    return worst


def test_band_state_smooth_on_grid():
    # the k-direction turn of the nontrivial field is ~46 degrees per step at 32^3
    assert _worst_overlap_deficit(32) == pytest.approx(0.153284, abs=1e-5)
    assert _worst_overlap_deficit(48) < 0.1


@pytest.mark.parametrize("drive", [MODEL_I, MODEL_II, HarmonicDrive(-10, 12)])
def test_unitarity_and_alpha_spectrum_invariance(drive):
    rng = np.random.default_rng(2)
    k1, k2 = rng.uniform(0, 2 * np.pi, (2, 24))
    for a1, a2 in rng.uniform(0, 2 * np.pi, (3, 2)):
        u = period_unitary(drive, k1, k2, a1)
        assert unitarity_residual(u) < 1e-10
        q1 = effective_hamiltonian(drive, k1, k2, a1).quasienergies
        q2 = effective_hamiltonian(drive, k1, k2, a2).quasienergies
        assert np.max(np.abs(q1 - q2)) < 1e-8


@pytest.mark.parametrize("drive", [MODEL_I, MODEL_II])
def test_conjugation_identity_for_effective_hamiltonians(drive):
    rng = np.random.default_rng(4)
    for _ in range(4):
        k1, k2, a1, a2 = rng.uniform(0, 2 * np.pi, 4)
        h1 = effective_hamiltonian(drive, k1, k2, a1).matrix
        h2 = effective_hamiltonian(drive, k1, k2, a2).matrix
        mm = micromotion_unitary(drive, k1, k2, a1, a2)
        assert np.max(np.abs(h1 - dagger(mm) @ h2 @ mm)) < 1e-7


@pytest.mark.parametrize("drive", [MODEL_I, MODEL_II])
def test_composition(drive):
    k1, k2 = 2.2, 0.9
    t0, t1, t2 = 0.05, 0.31, 0.77
    kw = {"tol": 1e-11}
    whole = propagate(drive, k1, k2, t0, t2, **kw)
    parts = propagate(drive, k1, k2, t1, t2, **kw) @ propagate(drive, k1, k2, t0, t1, **kw)
    assert frob(whole - parts) < 1e-9


def test_exact_segments_match_generic_midpoint_when_aligned():
    # t0 = 1/8 puts the switch on a step boundary of 2**14 midpoint steps
    d = PiecewiseDrive(mu1=-10, mu2=-2, t0=0.125)
    g = np.linspace(0, 2 * np.pi, 7)
    k1, k2 = np.meshgrid(g, g, indexing="ij")
    exact = propagate(d, k1, k2, 0.0, 1.0)
    generic = _midpoint_product(d, k1, k2, 0.0, 1.0, 2**14)
    assert np.max(np.abs(exact - generic)) < 1e-7


def test_generic_midpoint_converges_across_unaligned_switch():
    errs = [
        np.max(np.abs(propagate(MODEL_I, 0.4, 1.0, 0.0, 1.0) - _midpoint_product(MODEL_I, 0.4, 1.0, 0.0, 1.0, n)))
        for n in (2**10, 2**12, 2**14)
    ]
    assert errs[2] < errs[1] < errs[0]
    assert errs[2] < 1e-3
