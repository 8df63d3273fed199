import numpy as np
import pytest
from hypothesis import given, strategies as st

from semmhd.cases import CaseSpec
from semmhd.krylov import (
    CONSTANTS, IndefiniteOperator, LinearSystemSpec, NoConvergence, assemble_jacobi_diagonal,
    pcg_solve, project_mean_zero,
)
from semmhd.mesh import boundary_masks, build_box_mesh
from semmhd.operators import Discretization, stiffness_apply

from conftest import make_disc


def _helmholtz_spec(disc, c1, c0, free=None, **kw):
    free = np.ones(disc.mesh.n_global, bool) if free is None else free

    def op(x):
        xl = disc.scatter(x)
        y = disc.gather(c1 * stiffness_apply(disc, xl) + c0 * disc.geom.mass_weight * xl)
        return np.where(free, y, 0.0)

    return LinearSystemSpec(op, assemble_jacobi_diagonal(disc, c1, c0), free, disc.mass_global, **kw)


def _poisson_spec(disc, **kw):
    return _helmholtz_spec(disc, 1.0, 0.0, null_space=CONSTANTS, **kw)


def test_zero_rhs(disc_small):
    spec = _helmholtz_spec(disc_small, 1.0, 1.0)
    res = pcg_solve(spec, np.zeros(disc_small.mesh.n_global))
    assert res.iterations == 0 and np.all(res.solution == 0)


def test_mass_system_one_iteration(disc_small):
    spec = _helmholtz_spec(disc_small, 0.0, 1.0, rel_tolerance=1e-12)
    b = np.random.default_rng(0).standard_normal(disc_small.mesh.n_global)
    res = pcg_solve(spec, b)
    assert res.iterations == 1
    np.testing.assert_allclose(res.solution, b / disc_small.mass_global, rtol=1e-12)


def test_helmholtz_iterations_4x10x10_n6():
    mesh = build_box_mesh((4, 10, 10), L=4, N=6)
    disc = Discretization.from_mesh(mesh)
    free = boundary_masks(mesh, CaseSpec())["u0"].free
    spec = _helmholtz_spec(disc, 1e-3, 1.5, free=free, rel_tolerance=1e-10)
    b = np.where(free, np.random.default_rng(1).standard_normal(mesh.n_global), 0.0)
    res = pcg_solve(spec, b)
    assert res.converged and res.iterations <= 30


def test_jacobi_diagonal():
    disc = make_disc((2, 2, 2), N=3, delta=0.25, layers=1)
    np.testing.assert_allclose(assemble_jacobi_diagonal(disc, 0.0, 1.0), disc.mass_global)
    rng = np.random.default_rng(2)
    for c1, c0 in ((1.0, 0.0), (0.0, 2.0), (0.3, 0.7)):
        assert np.all(assemble_jacobi_diagonal(disc, c1, c0, rng.uniform(0.1, 5, 32)) > 0)


def test_jacobi_diagonal_dense_single_element():
    mesh = build_box_mesh((1, 1, 1), L=1, N=2, periodic_x=False)
    mesh.yb[:] = [0, 1]
    mesh.zb[:] = [0, 1]
    disc = Discretization.from_mesh(mesh)
    n = mesh.n_global
    H = np.zeros((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1
        xl = disc.scatter(e)
        H[:, j] = disc.gather(0.7 * stiffness_apply(disc, xl) + 1.3 * disc.geom.mass_weight * xl)
    np.testing.assert_allclose(assemble_jacobi_diagonal(disc, 0.7, 1.3), np.diag(H), atol=1e-12)


def test_jacobi_diagonal_assembled_periodic():
    disc = make_disc((2, 1, 2), N=2)
    n = disc.mesh.n_global
    cvec = np.random.default_rng(4).uniform(0.5, 2, disc.mesh.num_elements)
    diag = np.empty(n)
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1
        diag[j] = disc.gather(stiffness_apply(disc, disc.scatter(e), cvec))[j]
    np.testing.assert_allclose(assemble_jacobi_diagonal(disc, 1.0, 0.0, cvec), diag, atol=1e-12)


def test_project_mean_zero(disc_small):
    w = disc_small.mass_global
    c = np.full_like(w, 3.7)
    assert np.abs(project_mean_zero(c, w)).max() < 1e-13
    rng = np.random.default_rng(3)
    x = project_mean_zero(rng.standard_normal(len(w)), w)
    np.testing.assert_allclose(project_mean_zero(x, w), x, atol=1e-13)


@given(seed=st.integers(0, 10_000))
def test_projection_idempotent(seed):
    disc = make_disc((2, 2, 2), N=2)
    w = disc.mass_global
    rng = np.random.default_rng(seed)
    act = rng.random(len(w)) > 0.3
    x = rng.standard_normal(len(w))
    p1 = project_mean_zero(x, w, act)
    np.testing.assert_allclose(project_mean_zero(p1, w, act), p1, atol=1e-13)
    np.testing.assert_array_equal(p1[~act], x[~act])


def test_error_a_norm_monotone():
    disc = make_disc((2, 2, 2), N=4)
    spec = _helmholtz_spec(disc, 1.0, 0.1, rel_tolerance=1e-14)
    b = np.random.default_rng(5).standard_normal(disc.mesh.n_global)
    x_star = pcg_solve(spec, b).solution
    errs = []
    for k in range(0, 40):
        spec.max_iterations = k
        x = pcg_solve(spec, b, raise_on_failure=False).solution
        e = x - x_star
        errs.append(float(e @ spec.operator(e)))
    assert all(b2 <= b1 * (1 + 1e-12) + 1e-30 for b1, b2 in zip(errs, errs[1:]))


@given(seed=st.integers(0, 10_000))
def test_guess_invariance(seed):
    disc = make_disc((2, 2, 2), N=3)
    rng = np.random.default_rng(seed)
    spec = _helmholtz_spec(disc, 1.0, 0.5, rel_tolerance=1e-10)
    b = rng.standard_normal(disc.mesh.n_global)
    a = pcg_solve(spec, b).solution
    g = pcg_solve(spec, b, rng.standard_normal(len(b))).solution
    tol = 10 * 1e-10 * np.abs(a).max() * 100
    np.testing.assert_allclose(a, g, atol=tol)


@given(seed=st.integers(0, 10_000))
def test_null_space_hygiene(seed):
    disc = make_disc((2, 2, 2), N=3)
    rng = np.random.default_rng(seed)
    spec = _poisson_spec(disc, rel_tolerance=1e-10)
    b = rng.standard_normal(disc.mesh.n_global)
    res = pcg_solve(spec, b, rng.standard_normal(len(b)))
    x = res.solution
    w = disc.mass_global
    assert abs(w @ x) / w.sum() <= 1e-12 * max(1.0, np.abs(x).max())
    # residual against the consistent (projected) rhs is orthogonal to constants
    bp = b - w * (b.sum() / w.sum())
    r = bp - spec.operator(x)
    assert abs(r.sum()) <= 1e-10 * np.abs(bp).sum()


def test_no_convergence_reports_residual(disc_small):
    spec = _helmholtz_spec(disc_small, 1.0, 0.0, null_space=CONSTANTS, rel_tolerance=1e-14,
                           max_iterations=2)
    b = np.random.default_rng(6).standard_normal(disc_small.mesh.n_global)
    with pytest.raises(NoConvergence) as ei:
        pcg_solve(spec, b)
    assert ei.value.result.iterations == 2 and ei.value.result.residual > 0


def test_indefinite_operator(disc_small):
    n = disc_small.mesh.n_global
    spec = LinearSystemSpec(lambda x: -x, np.ones(n), np.ones(n, bool), np.ones(n))
    with pytest.raises(IndefiniteOperator):
        pcg_solve(spec, np.ones(n))
