from __future__ import annotations

import numpy as np
import pytest

from micromotion.errors import (
    CurvesTooClose,
    GapClosing,
    NonContractibleCurve,
    NonzeroFlux,
    OpenCurve,
    ResolutionError,
)
from micromotion.models import ConstantDrive, PiecewiseDrive
from micromotion.topology import (
    PseudoSpinGrid,
    VectorFieldGrid,
    chern_number,
    chern_slices,
    current_field,
    gauge_field,
    gauss_linking,
    hopf_invariant,
    hopf_texture,
    linking_number,
    preimage_curves,
    pseudospin_grid,
    summarize,
)
from micromotion.topology.curves import PreimageCurve, rotation_to_north
from micromotion.topology.field import curl, divergence

TRIVIAL = PiecewiseDrive(-10, -5, 0.1)
NONTRIVIAL = PiecewiseDrive(-10, -2, 0.1)
HALF = (0.5, 0.5, 0.5)


@pytest.fixture(scope="module")
def nontrivial32():
    return pseudospin_grid(NONTRIVIAL, 32, 32, 32, offset=HALF)


@pytest.fixture(scope="module")
def texture32():
    return hopf_texture(32, offset=0.31)


def circle(center, normal_axis, radius=1.0, n=200):
    t = np.linspace(0, 2 * np.pi, n, endpoint=False)
    c, s = radius * np.cos(t), radius * np.sin(t)
    pts = np.zeros((n, 3))
    a, b = [ax for ax in range(3) if ax != normal_axis]
    pts[:, a], pts[:, b] = c, s
    return pts + np.asarray(center, dtype=float)


def as_curve(points):
    return PreimageCurve(np.mod(points, 2 * np.pi), points, True, (0, 0, 0))


# ---- Chern oracle ----


@pytest.mark.parametrize("mu, expected", [(-10, 0), (-5, 0)])
def test_chern_trivial(mu, expected):
    assert chern_number(mu, 64) == expected
    assert chern_number(mu, 128) == expected


def test_chern_nontrivial_stable_under_refinement():
    c64 = chern_number(-2, 64)
    assert c64 != 0
    assert chern_number(-2, 128) == c64 == -1


def test_chern_gap_closing():
    with pytest.raises(GapClosing):
        chern_number(-3, 64)


# ---- pseudo-spin grid ----


def test_constant_drive_field_points_down():
    g = pseudospin_grid(ConstantDrive((0.0, 0.0, 1.0)), 8, 8, 8)
    np.testing.assert_allclose(g.data, np.broadcast_to([0, 0, -1.0], (8, 8, 8, 3)), atol=1e-14)


def test_unit_norm_on_16_grid():
    g = pseudospin_grid(NONTRIVIAL, 16, 16, 16)
    assert np.max(np.abs(np.linalg.norm(g.data, axis=-1) - 1)) < 1e-10


def test_grid_count_minimum():
    with pytest.raises(ValueError):
        pseudospin_grid(NONTRIVIAL, 4, 16, 16)


def test_gap_closing_reports_node():
    # |h1(0, 0)| = 7, so t0 = pi/7 puts a quasienergy exactly at 0 on the k = 0 nodes
    drive = PiecewiseDrive(-10, -2, np.pi / 7)
    with pytest.raises(GapClosing) as err:
        pseudospin_grid(drive, 16, 16, 8)
    assert "node" in err.value.context


def test_alpha_flat_quasienergy(nontrivial32):
    q = nontrivial32.quasienergy
    assert np.max(np.abs(q - q[:, :, :1])) < 1e-8


def test_resolution_check():
    rng = np.random.default_rng(3)
    v = rng.normal(size=(8, 8, 8, 3))
    g = PseudoSpinGrid(v / np.linalg.norm(v, axis=-1, keepdims=True))
    with pytest.raises(ResolutionError):
        current_field(g)


# ---- current, gauge field, Hopf integral ----


@pytest.mark.parametrize("stencil", ["lattice", "central"])
def test_constant_field_has_no_current(stencil):
    g = PseudoSpinGrid(np.broadcast_to([0.0, 0.6, 0.8], (8, 8, 8, 3)).copy())
    j = current_field(g, stencil)
    assert np.all(j.data == 0)
    A = gauge_field(j)
    assert np.all(A.data == 0)
    assert hopf_invariant(j, A) == 0


def test_slice_fluxes_are_zero_integers(nontrivial32):
    j = current_field(nontrivial32)
    np.testing.assert_allclose(chern_slices(j), 0, atol=1e-12)


def test_lattice_current_is_divergence_free(nontrivial32):
    j = current_field(nontrivial32)
    assert np.max(np.abs(divergence(j, on="plaquettes"))) < 1e-8


def test_gauge_solve_residuals(nontrivial32):
    j = current_field(nontrivial32)
    A = gauge_field(j)
    rel = np.linalg.norm(curl(A).data - j.data) / np.linalg.norm(j.data)
    assert rel < 1e-8
    assert np.max(np.abs(divergence(A))) < 1e-10


def test_central_gauge_solve_residual_on_band_limited_current():
    # a central-difference current of a smooth field has no Nyquist content
    # only when the field is band limited; use an explicit curl instead
    rng = np.random.default_rng(4)
    N = 16
    h = np.full(3, 2 * np.pi / N)
    B = VectorFieldGrid(rng.normal(size=(3, N, N, N)), h, "central")
    j = curl(B)
    A = gauge_field(j)
    rel = np.linalg.norm(curl(A).data - j.data) / np.linalg.norm(j.data)
    assert rel < 1e-8


def test_hopf_gauge_invariance(nontrivial32):
    j = current_field(nontrivial32)
    A = gauge_field(j)
    base = hopf_invariant(j, A)
    rng = np.random.default_rng(5)
    lam = rng.normal(size=j.dims)
    h = j.spacing
    grad = np.stack([(np.roll(lam, -1, ax) - lam) / h[ax] for ax in range(3)])
    shifted = VectorFieldGrid(A.data + grad, h, A.stencil)
    assert hopf_invariant(j, shifted) == pytest.approx(base, abs=1e-10)


def test_nonzero_flux_rejected():
    N = 8
    h = np.full(3, 2 * np.pi / N)
    data = np.zeros((3, N, N, N))
    data[2] = 1.0 / (2 * np.pi) ** 2
    with pytest.raises(NonzeroFlux):
        gauge_field(VectorFieldGrid(data, h))


def test_trivial_scenario_hopf_zero():
    g = pseudospin_grid(TRIVIAL, 32, 32, 32)
    s = summarize(g)
    assert abs(s.hopf_value) < 0.02
    assert s.chern_slices == (0, 0, 0)


def test_nontrivial_scenario_hopf_one(nontrivial32):
    s = summarize(nontrivial32)
    assert s.hopf_rounded == 1
    assert s.hopf_value == pytest.approx(0.98455, abs=1e-4)


def test_texture_degree_and_sign(texture32):
    assert summarize(texture32).hopf_value == pytest.approx(0.9702, abs=1e-3)
    flipped = hopf_texture(32, charge=-1, offset=0.31)
    assert summarize(flipped).hopf_value == pytest.approx(-0.9702, abs=1e-3)


def test_hopf_sign_ignores_band_choice(nontrivial32):
    flipped = PseudoSpinGrid(-nontrivial32.data, nontrivial32.offset)
    assert summarize(flipped).hopf_value == pytest.approx(summarize(nontrivial32).hopf_value, abs=1e-12)


def test_hopf_grid_convergence():
    values = [summarize(pseudospin_grid(NONTRIVIAL, n, n, n)).hopf_value for n in (24, 32, 48)]
    errs = np.abs(np.array(values) - 1)
    assert errs[0] > errs[1] > errs[2]


def test_central_stencil_is_a_cross_check(nontrivial32):
    s = summarize(nontrivial32, stencil="central")
    assert s.hopf_rounded == 1


# ---- preimage curves ----


def test_rotation_to_north():
    for t in ([1, 0, 0], [0, 0, -1], [0.3, -0.4, 0.5], [0, 0, 1]):
        R = rotation_to_north(t)
        np.testing.assert_allclose(R @ (np.array(t) / np.linalg.norm(t)), [0, 0, 1], atol=1e-14)
        assert np.linalg.det(R) == pytest.approx(1.0)


def test_constant_field_preimages():
    g = PseudoSpinGrid(np.broadcast_to([0.0, 0.0, 1.0], (8, 8, 8, 3)).copy())
    assert preimage_curves(g, "south") == []
    with pytest.raises(ResolutionError):
        preimage_curves(g, "north")


def test_texture_preimages_are_closed_loops(texture32):
    for pole in ([1, 0, 0], [-1, 0, 0], "south"):
        curves = preimage_curves(texture32, pole)
        assert len(curves) == 1
        c = curves[0]
        assert c.closed and c.winding == (0, 0, 0)
        assert c.max_step() < 2 * texture32.spacing[0]
        assert np.all((c.points >= 0) & (c.points < 2 * np.pi))


def test_model_preimage_families(nontrivial32):
    north = preimage_curves(nontrivial32, "north")
    south = preimage_curves(nontrivial32, "south")
    assert [c.winding for c in north] == [(0, 0, 0)]
    assert sorted(c.winding for c in south) == [(0, 0, -1), (0, 0, -1), (0, 0, 1), (0, 0, 1)]


def test_open_curve_reported_with_cell():
    # a lone crossing cannot be continued into a closed loop
    g = hopf_texture(32, offset=0.31)
    data = g.data.copy()
    data[16:, :, :] = [0.0, 0.0, 1.0]
    with pytest.raises((OpenCurve, ResolutionError)):
        preimage_curves(PseudoSpinGrid(data, g.offset), [1, 0, 0])


# ---- linking ----


def test_gauss_hopf_link():
    a = circle((0, 0, 0), 2)
    b = circle((1, 0, 0), 1)
    assert abs(gauss_linking(a, b)) == pytest.approx(1.0, abs=1e-10)
    assert gauss_linking(a, b) == pytest.approx(-gauss_linking(a, b[::-1]), abs=1e-12)


def test_gauss_separated_circles():
    assert gauss_linking(circle((0, 0, 0), 2), circle((5, 0, 0), 1)) == pytest.approx(0.0, abs=1e-10)


def test_linking_on_torus_counts_translates():
    a = as_curve(circle((np.pi, np.pi, np.pi), 2))
    b = as_curve(circle((np.pi + 1, np.pi, np.pi), 1))
    res = linking_number(a, b)
    assert abs(res.rounded) == 1 and res.residual < 1e-10


def test_linking_rejects_net_winding():
    line = np.stack([np.full(32, 1.0), np.full(32, 1.0), np.linspace(0, 2 * np.pi, 32, endpoint=False)], 1)
    wind = PreimageCurve(line, line, True, (0, 0, 1))
    loop = as_curve(circle((np.pi, np.pi, np.pi), 0, 1.0))
    with pytest.raises(NonContractibleCurve):
        linking_number(loop, wind)


def test_curves_too_close():
    a = as_curve(circle((np.pi, np.pi, np.pi), 2))
    b = as_curve(circle((np.pi, np.pi, np.pi + 0.05), 2))
    with pytest.raises(CurvesTooClose):
        linking_number(a, b, spacing=0.1)


def test_empty_cycle_links_nothing():
    a = as_curve(circle((np.pi, np.pi, np.pi), 2))
    assert linking_number([], a).rounded == 0


def test_texture_linking_matches_integral(texture32):
    a = preimage_curves(texture32, [1, 0, 0])
    b = preimage_curves(texture32, [-1, 0, 0])
    res = linking_number(a, b, spacing=texture32.spacing[0])
    assert res.rounded == 1 and res.residual < 1e-8
    assert res.rounded == summarize(texture32).hopf_rounded


def test_model_linking_and_pole_independence(nontrivial32):
    h = nontrivial32.spacing[0]
    hopf = summarize(nontrivial32).hopf_rounded
    ns = linking_number(preimage_curves(nontrivial32, "north"), preimage_curves(nontrivial32, "south"), h)
    xx = linking_number(preimage_curves(nontrivial32, [1, 0, 0]), preimage_curves(nontrivial32, [-1, 0, 0]), h)
    assert ns.rounded == xx.rounded == hopf == 1


def test_trivial_model_linking_zero():
    g = pseudospin_grid(TRIVIAL, 32, 32, 32, offset=HALF)
    north = preimage_curves(g, "north")
    south = preimage_curves(g, "south")
    assert all(any(c.winding) for c in south)
    assert linking_number(north, south).rounded == 0
