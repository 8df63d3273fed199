import math

import numpy as np
import pytest

from semmhd import oracle as orc
from semmhd.transient import has_zero_crossings, modal_eigenvalues


def test_bc_kinds():
    assert orc.as_bc("hunt") == orc.hunt()
    with pytest.raises(ValueError):
        orc.BcKind("mixed")
    with pytest.raises(ValueError):
        orc.conducting(1.0, 0.0)


def test_grid_layout():
    g = orc.OracleGrid2D.build(9, orc.conducting(5.0, 0.2))
    assert g.h == pytest.approx(0.2) and g.ext == 1
    assert g.coords[0] == pytest.approx(-1.2) and g.coords[-1] == pytest.approx(1.2)
    # interface on grid lines, u only strictly inside the fluid
    assert np.all(np.abs(g.coords[g.u_mask.any(axis=1)]) < 1)
    assert g.r_w_cells.max() == 5.0 and g.r_w_cells.min() == 1.0
    with pytest.raises(ValueError):
        orc.OracleGrid2D.build(10, orc.conducting(5.0, 0.2))
    with pytest.raises(ValueError):
        orc.OracleGrid2D.build(8, "insulating").center


def test_under_resolved():
    with pytest.raises(orc.UnderResolved):
        orc.solve_steady_reduced(10.0, "insulating", 63)
    assert orc.min_points(10) == 80


def test_ha0_matches_fourier_series():
    ref = orc.duct_poisson_series()
    assert abs(ref - orc.duct_poisson_double_series(terms=2000)) < 1e-6
    r = orc.richardson(0.0, "insulating", 255)
    assert abs(r.center()[0] - ref) <= 1e-6
    assert r.u_error_bar < 1e-5


def test_series_off_centre():
    y, z = 0.3, -0.55
    assert abs(orc.duct_poisson_series(y, z) - orc.duct_poisson_double_series(y, z, 3000)) < 1e-6


@pytest.mark.parametrize("bc", ["insulating", "hunt"])
def test_transform_and_sparse_paths_agree(bc):
    a = orc.solve_steady_reduced(10.0, bc, 81, method="dst")
    b = orc.solve_steady_reduced(10.0, bc, 81, method="sparse")
    assert np.abs(a.u - b.u).max() < 1e-12
    assert np.abs(a.b - b.b).max() < 1e-12


@pytest.mark.parametrize("bc", ["insulating", "hunt", orc.conducting(100.0, 2 / 82 * 4)])
def test_steady_residual_and_symmetry(bc):
    sol = orc.solve_steady_reduced(10.0, bc, 81)
    assert orc.steady_residual(sol) <= 1e-8
    # u even in y and z, b odd in y and even in z
    assert np.abs(sol.u - sol.u[::-1, :]).max() <= 1e-10
    assert np.abs(sol.u - sol.u[:, ::-1]).max() <= 1e-10
    assert np.abs(sol.b + sol.b[::-1, :]).max() <= 1e-10
    assert np.abs(sol.b - sol.b[:, ::-1]).max() <= 1e-10


@pytest.mark.parametrize("bc", ["insulating", "hunt"])
def test_grid_convergence_slope(bc):
    slope = orc.convergence_slope(10.0, bc)
    assert abs(slope - 2.0) <= 0.2


def test_ha100_insulating_center_near_inverse_ha_squared():
    # stated expectation: u0(0,0) within 25% of 1/Ha^2 for insulating walls
    uc = orc.solve_steady_reduced(100.0, "insulating", 801).center()[0]
    assert abs(uc - 1e-4) <= 0.25 * 1e-4


def test_ha100_conducting_hartmann_walls_center():
    # Hunt walls (conducting Hartmann walls) do give the 1/Ha^2 core
    uc = orc.solve_steady_reduced(100.0, "hunt", 801).center()[0]
    assert abs(uc - 1e-4) <= 0.25 * 1e-4


def test_conducting_wall_limits():
    n = 81
    d = 4 * 2 / (n + 1)
    ins = orc.solve_steady_reduced(10.0, "insulating", n).center()[0]
    thick = orc.solve_steady_reduced(10.0, orc.conducting(1e6, d), n).center()[0]
    thin = orc.solve_steady_reduced(10.0, orc.conducting(1e-5, d), n).center()[0]
    assert abs(thick - ins) / ins < 1e-4
    assert thin < 0.2 * ins


def test_reaction_diffusion():
    c0, u0 = orc.solve_u0_reaction_diffusion(0.0, 255)
    ref = orc.solve_steady_reduced(0.0, "insulating", 255)
    np.testing.assert_allclose(u0, ref.u, atol=1e-12)
    c, u = orc.solve_u0_reaction_diffusion(100.0, 801)
    mid = len(c) // 2
    assert 0.8e-4 <= u[mid, mid] <= 1.2e-4
    b0 = orc.recover_b0(100.0, c, u)
    assert np.abs(b0 + b0[::-1, :]).max() <= 1e-10 * np.abs(b0).max()
    # db0/dy = -Ha u0 away from the centre line
    dby = np.gradient(b0, c, axis=0)
    assert np.abs(dby[5:-5] + 100.0 * u[5:-5]).max() < 1e-2 * 100 * u.max()


def test_transient_ha0_monotone_to_poisson():
    h = orc.solve_transient_reduced(0.0, 1.0, 1.0, "insulating", 63, T=2.0)
    assert np.all(np.diff(h.u_center) >= -1e-15)
    final = orc.solve_steady_reduced(0.0, "insulating", 63).center()[0]
    assert h.u_center[-1] <= final + 1e-12
    assert abs(h.u_center[-1] - final) < 1e-3 * final
    assert h.metadata["source"] == "oracle"


def test_transient_hunt_period():
    h = orc.solve_transient_reduced(10.0, 1.0, 1.0, "hunt", 81, dt=1e-3, T=1.5)
    t, u = h.times, h.u_center
    dev = u - u[-1]
    peaks = [i for i in range(1, len(u) - 1) if dev[i] > dev[i - 1] and dev[i] >= dev[i + 1]]
    period = t[peaks[1]] - t[peaks[0]]
    assert abs(period - 0.4) <= 0.1 * 0.4


def test_elsasser_cross_check():
    Ha, n, dt, T = 10.0, 81, 1e-3, 0.5
    a = orc.solve_transient_reduced(Ha, 1.0, 1.0, "insulating", n, dt=dt, T=T)
    b = orc.solve_transient_elsasser(Ha, 1.0, n, dt=dt, T=T)
    assert np.abs(a.u_center - b.u_center).max() <= 1e-8
    assert np.abs(a.b_center - b.b_center).max() <= 1e-8


def test_instability_guard_and_validation():
    with pytest.raises(ValueError):
        orc.solve_transient_reduced(1.0, 0.0, 1.0, "hunt", 15)


@pytest.mark.parametrize("Re,Rm,Ha", [(1, 1, 10), (2, 0.5, 10), (1, 1, 5), (1, 1, 2),
                                      (1, 0.1, 1), (1, 0.2, 1.5), (0.5, 2, 2)])
def test_radicand_predicts_oscillation(Re, Rm, Ha):
    n = max(orc.min_points(Ha), 41) | 1
    h = orc.solve_transient_reduced(Ha, Re, Rm, "hunt", n, T=3.0)
    _, _, osc = modal_eigenvalues(Re, Rm, Ha)
    assert has_zero_crossings(h) == osc


def test_scale_b():
    assert orc.scale_b(2.0, 4.0, 1.0) == pytest.approx(4.0)
