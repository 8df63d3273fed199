import math

import numpy as np
import pytest

from semmhd.cases import (
    CaseSpec, InvalidCombination, PointSampler, UnknownField, center_probe, conducting_wall_spec,
    extract_cross_section, make_case, sample_cross_section,
)
from semmhd.mesh import Domain


def test_b0_derived():
    assert CaseSpec(Ha=100.0).B0 == 100.0
    assert CaseSpec(Ha=10.0, Re=4.0, Rm=0.25).B0 == 10.0
    assert CaseSpec(Ha=10.0, Re=2.0, Rm=2.0).B0 == pytest.approx(5.0)


@pytest.mark.parametrize("kw", [
    dict(kind="shercliff", delta=0.2), dict(kind="hunt", delta=0.1),
    dict(kind="conducting_wall", delta=0.0), dict(kind="pipe"), dict(Re=0.0),
    dict(Ha=-1.0), dict(kind="conducting_wall", delta=0.2, r_w_solid=0.0),
])
def test_invalid_combinations(kw):
    with pytest.raises(InvalidCombination):
        CaseSpec(**kw)


def test_default_configuration():
    s = CaseSpec()
    assert (s.kind, s.Ha, s.Re, s.Rm, s.N, s.mesh_counts, s.L) == ("shercliff", 10.0, 1.0, 1.0, 6, (4, 10, 10), 4.0)
    c = conducting_wall_spec()
    assert c.delta == 0.2 and c.wall_layers == 2


@pytest.fixture(scope="module")
def wall_case():
    return make_case(conducting_wall_spec(mesh_counts=(2, 4, 4), N=3, L=2.0, r_w_solid=7.0, delta=0.25))


def test_conducting_case_bundle(wall_case):
    c = wall_case
    fluid = c.mesh.element_domain == Domain.FLUID
    assert np.all(c.r_w[fluid] == 1.0) and np.all(c.r_w[~fluid] == 7.0)
    assert np.allclose(c.state.u, 0.0)
    # applied field along y, induced axial component starts at zero
    assert np.allclose(c.state.B[1], c.spec.B0)
    assert np.allclose(c.state.B[0], 0.0) and np.allclose(c.state.B[2], 0.0)


def test_probe_at_rest(wall_case):
    t, u, b = center_probe(wall_case.state, wall_case.mesh)
    assert t == 0.0 and u == 0.0 and b == 0.0


def test_point_sampler_exact_for_polynomials(wall_case):
    mesh = wall_case.mesh
    x, y, z = mesh.coords
    f = 1 + x * y ** 2 - 3 * z ** 3 + x * y * z
    rng = np.random.default_rng(0)
    pts = np.stack([rng.uniform(0, 2, 30), rng.uniform(-1.25, 1.25, 30), rng.uniform(-1.25, 1.25, 30)], axis=1)
    got = PointSampler(mesh, pts)(f)
    X, Y, Z = pts.T
    np.testing.assert_allclose(got, 1 + X * Y ** 2 - 3 * Z ** 3 + X * Y * Z, atol=1e-12)


def test_cross_section_constant(wall_case):
    from dataclasses import replace
    st = wall_case.state
    st = replace(st, B=np.stack([np.full_like(st.B[0], 3.5), st.B[1], st.B[2]]))
    ys, zs, v = extract_cross_section(st, wall_case.mesh, "B_x", 0.7)
    assert ys[0] == -1.25 and ys[-1] == 1.25
    assert np.allclose(v, 3.5, rtol=1e-13)
    ys, zs, v = extract_cross_section(st, wall_case.mesh, "u_x", 0.7)
    assert ys[0] == -1.0 and np.all(v == 0.0)


def test_unknown_field(wall_case):
    with pytest.raises(UnknownField):
        extract_cross_section(wall_case.state, wall_case.mesh, "vorticity", 0.0)


@pytest.fixture(scope="module")
def short_shercliff():
    c = make_case(CaseSpec(kind="shercliff", Ha=10.0, mesh_counts=(2, 4, 4), N=4, L=2.0, dt=1e-2))
    c.solver.run(c.state, 0.2)
    return c


def test_x_invariance(short_shercliff):
    c = short_shercliff
    y = np.array([0.0, 0.3, -0.55])
    a = sample_cross_section(c.mesh, c.state.u[0], 0.25, y, y)
    b = sample_cross_section(c.mesh, c.state.u[0], 1.6, y, y)
    assert np.abs(a - b).max() <= 1e-8


def test_shercliff_slice_even(short_shercliff):
    c = short_shercliff
    _, _, v = extract_cross_section(c.state, c.mesh, "u_x", 0.5, npts=21)
    assert np.abs(v - v[::-1, :]).max() <= 1e-8 * np.abs(v).max()
    assert np.abs(v - v[:, ::-1]).max() <= 1e-8 * np.abs(v).max()


def test_hunt_equals_shercliff_with_dirichlet_walls():
    from semmhd.mesh import boundary_masks
    s = make_case(CaseSpec(kind="shercliff", mesh_counts=(1, 2, 2), N=3, L=1.0))
    h = make_case(CaseSpec(kind="hunt", mesh_counts=(1, 2, 2), N=3, L=1.0))
    for k in ("u0", "u1", "u2"):
        assert np.array_equal(s.masks[k].dirichlet, h.masks[k].dirichlet)
    # Hunt differs only by natural conditions on B at the Hartmann walls
    assert any(not np.array_equal(s.masks[f"B{c}"].dirichlet, h.masks[f"B{c}"].dirichlet) for c in range(3))
