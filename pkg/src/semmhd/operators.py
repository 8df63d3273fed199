"""Matrix-free spectral-element operators on element-local arrays.

Scalars are ``(E, n, n, n)`` arrays, vectors ``(3, E, n, n, n)``.  Every
operator returns element-local (unassembled) results; callers apply
:func:`Discretization.dssum` and masks.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .gll import GllBasis1D, gll_basis
from .mesh import BoxMesh, GeomFactors, gather, geometric_factors, scatter


class FlopCounter:
    """Counts floating-point operations issued by the tensor contractions."""

    def __init__(self):
        self.count = 0

    def reset(self):
        self.count = 0


flops = FlopCounter()


# ----------------------------------------------------------------------------
# tensor-product contractions; M is (m, n) and acts on one axis of (E, n, n, n)

def apply_x(M: np.ndarray, u: np.ndarray) -> np.ndarray:
    n = u.shape[-1]
    out = (u.reshape(-1, n) @ M.T).reshape(u.shape[:-1] + (M.shape[0],))
    flops.count += 2 * out.size * M.shape[1]
    return out


def apply_y(M: np.ndarray, u: np.ndarray) -> np.ndarray:
    out = np.matmul(M, u)
    flops.count += 2 * out.size * M.shape[1]
    return out


def apply_z(M: np.ndarray, u: np.ndarray) -> np.ndarray:
    E, nz, ny, nx = u.shape
    out = np.matmul(M, u.reshape(E, nz, ny * nx)).reshape(E, M.shape[0], ny, nx)
    flops.count += 2 * out.size * M.shape[1]
    return out


def apply_xyz(Mx, My, Mz, u):
    return apply_z(Mz, apply_y(My, apply_x(Mx, u)))


def ref_grad(D: np.ndarray, u: np.ndarray):
    return apply_x(D, u), apply_y(D, u), apply_z(D, u)


def ref_grad_transpose(D: np.ndarray, ur, us, ut):
    Dt = D.T
    return apply_x(Dt, ur) + apply_y(Dt, us) + apply_z(Dt, ut)


def _per_elem(a: np.ndarray) -> np.ndarray:
    return a[:, None, None, None]


@dataclass(eq=False)
class Discretization:
    """Mesh + basis + geometry, with the assembled mass and helper weights."""

    mesh: BoxMesh
    basis: GllBasis1D
    geom: GeomFactors
    mass_global: np.ndarray = field(init=False)

    def __post_init__(self):
        self.mass_global = gather(self.mesh, self.geom.mass_weight)

    @classmethod
    def from_mesh(cls, mesh: BoxMesh) -> "Discretization":
        basis = gll_basis(mesh.order)
        return cls(mesh, basis, geometric_factors(mesh, basis))

    @property
    def shape(self):
        m = self.mesh
        return (m.num_elements, m.n, m.n, m.n)

    def zeros(self, vector: bool = False) -> np.ndarray:
        return np.zeros(((3,) if vector else ()) + self.shape)

    def gather(self, f):
        return gather(self.mesh, f)

    def scatter(self, v):
        return scatter(self.mesh, v)

    def dssum(self, f: np.ndarray) -> np.ndarray:
        if f.ndim == 5:
            return np.stack([self.dssum(c) for c in f])
        return scatter(self.mesh, gather(self.mesh, f))

    def mass_local(self) -> np.ndarray:
        return self.scatter(self.mass_global)

    def project_continuous(self, f: np.ndarray) -> np.ndarray:
        """Mass-weighted average of a discontinuous field onto the continuous space."""
        if f.ndim == 5:
            return np.stack([self.project_continuous(c) for c in f])
        return self.scatter(self.gather(self.geom.mass_weight * f) / self.mass_global)

    def physical_grad(self, u: np.ndarray):
        ur, us, ut = ref_grad(self.basis.diff_matrix, u)
        rx = self.geom.rx
        return (
            _per_elem(rx[:, 0]) * ur,
            _per_elem(rx[:, 1]) * us,
            _per_elem(rx[:, 2]) * ut,
        )

    def element_coeff(self, coeff) -> np.ndarray:
        E = self.mesh.num_elements
        if coeff is None:
            return np.ones(E)
        c = np.asarray(coeff, dtype=float)
        return np.full(E, float(c)) if c.ndim == 0 else c

    def scaled_metric(self, coeff) -> np.ndarray:
        """coeff * G_dd, cached per coefficient vector."""
        c = self.element_coeff(coeff)
        key = c.tobytes()
        cache = self.__dict__.setdefault("_metric_cache", {})
        if key not in cache:
            if len(cache) > 8:
                cache.clear()
            cache[key] = _per_elem(c) * self.geom.metric_diag
        return cache[key]


# ----------------------------------------------------------------------------
# A, B, C and friends

def stiffness_apply(disc: Discretization, u: np.ndarray, coeff=None) -> np.ndarray:
    """Local evaluation of A(coeff) u = sum_d D_d^T (G_dd coeff D_d u)."""
    D = disc.basis.diff_matrix
    G = disc.scaled_metric(coeff)
    ur, us, ut = ref_grad(D, u)
    wr, ws, wt = G[0] * ur, G[1] * us, G[2] * ut
    flops.count += 6 * u.size
    return ref_grad_transpose(D, wr, ws, wt)


def stiffness_diagonal(disc: Discretization, coeff=None) -> np.ndarray:
    """Local diagonal of A(coeff): sum_d sum_a D[a, p]^2 G_d(a)."""
    c = _per_elem(disc.element_coeff(coeff))
    D2 = disc.basis.diff_matrix ** 2
    G = disc.geom.metric_diag
    return c * (apply_x(D2.T, G[0]) + apply_y(D2.T, G[1]) + apply_z(D2.T, G[2]))


def mass_apply(disc: Discretization, f: np.ndarray) -> np.ndarray:
    """Multiply by the assembled diagonal mass (result is continuous)."""
    return disc.mass_local() * f


def mass_solve(disc: Discretization, f: np.ndarray) -> np.ndarray:
    return f / disc.mass_local()


def interp_fine(disc: Discretization, u: np.ndarray) -> np.ndarray:
    J = disc.basis.fine_interp
    return apply_xyz(J, J, J, u)


def advect(disc: Discretization, z: np.ndarray, w: np.ndarray, dealias: bool = True) -> np.ndarray:
    """Weak advection C(z) w, componentwise: (phi_i, z . grad w).

    With ``dealias`` the integrand is evaluated on the ceil(3(N+1)/2)^3
    Gauss grid; otherwise GLL collocation is used.  Accepts a scalar or a
    vector ``w``.
    """
    if w.ndim == 5:
        if dealias:
            zf = [interp_fine(disc, z[d]) for d in range(3)]
        return np.stack([
            _advect_scalar(disc, z, w[c], dealias, zf if dealias else None)
            for c in range(3)
        ])
    return _advect_scalar(disc, z, w, dealias, None)


def _advect_scalar(disc, z, w, dealias, zf):
    b = disc.basis
    rx = disc.geom.rx
    if not dealias:
        g = disc.physical_grad(w)
        return disc.geom.mass_weight * (z[0] * g[0] + z[1] * g[1] + z[2] * g[2])
    if zf is None:
        zf = [interp_fine(disc, z[d]) for d in range(3)]
    J, Jd = b.fine_interp, b.fine_diff
    wx = _per_elem(rx[:, 0]) * apply_xyz(Jd, J, J, w)
    wy = _per_elem(rx[:, 1]) * apply_xyz(J, Jd, J, w)
    wz = _per_elem(rx[:, 2]) * apply_xyz(J, J, Jd, w)
    wf = b.fine_weights
    W = wf[:, None, None] * wf[None, :, None] * wf[None, None, :]
    integrand = (_per_elem(disc.geom.jacobian[:, 0, 0, 0]) * W[None]) * (
        zf[0] * wx + zf[1] * wy + zf[2] * wz
    )
    Jt = J.T
    return apply_xyz(Jt, Jt, Jt, integrand)


def weak_gradient(disc: Discretization, p: np.ndarray) -> np.ndarray:
    """(phi_i, dp/dx_d) for d = 0..2, local."""
    g = disc.physical_grad(p)
    B = disc.geom.mass_weight
    return np.stack([B * g[0], B * g[1], B * g[2]])


def weak_divergence(disc: Discretization, u: np.ndarray) -> np.ndarray:
    """-(grad phi_i, u): the negative transpose of :func:`weak_gradient`.

    Equals (phi_i, div u) up to the boundary flux of u.
    """
    B = disc.geom.mass_weight
    rx = disc.geom.rx
    D = disc.basis.diff_matrix
    return -ref_grad_transpose(
        D,
        B * _per_elem(rx[:, 0]) * u[0],
        B * _per_elem(rx[:, 1]) * u[1],
        B * _per_elem(rx[:, 2]) * u[2],
    )


def divergence(disc: Discretization, u: np.ndarray) -> np.ndarray:
    """Pointwise collocation divergence (local)."""
    return disc.physical_grad(u[0])[0] + disc.physical_grad(u[1])[1] + disc.physical_grad(u[2])[2]


def curl(disc: Discretization, u: np.ndarray) -> np.ndarray:
    """Pointwise collocation curl of a continuous vector field (local result)."""
    gx = disc.physical_grad(u[0])
    gy = disc.physical_grad(u[1])
    gz = disc.physical_grad(u[2])
    return np.stack([gz[1] - gy[2], gx[2] - gz[0], gy[0] - gx[1]])


def curl_curl(disc: Discretization, u: np.ndarray) -> np.ndarray:
    """curl(curl u) with a mass-weighted continuity projection in between."""
    w = disc.project_continuous(curl(disc, u))
    return curl(disc, w)


def laplacian_collocation(disc: Discretization, u: np.ndarray) -> np.ndarray:
    """Pointwise second-derivative Laplacian of a scalar (local)."""
    g = disc.physical_grad(u)
    return disc.physical_grad(g[0])[0] + disc.physical_grad(g[1])[1] + disc.physical_grad(g[2])[2]
