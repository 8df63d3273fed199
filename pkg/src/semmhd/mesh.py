"""Axially periodic two-domain box mesh, geometry, continuity map and masks.

Arrays of per-point data are element-local with shape ``(E, n, n, n)`` in
``(element, k, j, i)`` order, i.e. z slowest and x fastest within an element.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .gll import GllBasis1D, gll_basis


class InvalidExtent(ValueError):
    pass


class DegenerateElement(ValueError):
    pass


class UnknownCase(ValueError):
    pass


class Domain(IntEnum):
    SOLID = 0
    FLUID = 1


def graded_breakpoints(a: float, b: float, count: int, first: float | None = None) -> np.ndarray:
    """Breakpoints of `count` cells on [a, b], symmetric geometric grading.

    The two wall-adjacent cells have width `first` (if it is smaller than the
    uniform width) and widths grow by a constant ratio toward the middle.
    """
    uniform = (b - a) / count
    if first is None or first >= uniform or count < 3:
        return np.linspace(a, b, count + 1)
    half = count // 2
    middle = count % 2  # one central cell when count is odd

    def span(r):
        # width of the half-interval covered by `half` graded cells plus half the
        # central cell, which continues the progression
        s = first * (r**half - 1) / (r - 1) if r != 1.0 else first * half
        if middle:
            s += 0.5 * first * r**half
        return s

    target = 0.5 * (b - a)
    lo, hi = 1.0 + 1e-12, 10.0
    while span(hi) < target:
        hi *= 2
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if span(mid) < target:
            lo = mid
        else:
            hi = mid
    r = 0.5 * (lo + hi)
    widths = first * r ** np.arange(half)
    mids = [first * r**half] if middle else []
    w = np.concatenate([widths, mids, widths[::-1]])
    w *= (b - a) / w.sum()
    out = a + np.concatenate([[0.0], np.cumsum(w)])
    out[-1] = b
    return out


def hartmann_first_width(ha: float | None) -> float | None:
    """Wall-adjacent element width cap 5/Ha used when Ha > 20."""
    if ha is None or ha <= 20:
        return None
    return 5.0 / ha


@dataclass(eq=False)
class BoxMesh:
    counts: tuple[int, int, int]
    length: float
    delta: float
    order: int
    wall_layers: int
    periodic_x: bool
    xb: np.ndarray
    yb: np.ndarray
    zb: np.ndarray
    fluid_cells_y: tuple[int, int]  # [start, stop) cell index range of the fluid in y
    fluid_cells_z: tuple[int, int]
    elem_ijk: np.ndarray  # (E, 3) cell indices
    element_domain: np.ndarray  # (E,) Domain values
    global_ids: np.ndarray  # (E, n, n, n)
    n_global: int
    lattice_shape: tuple[int, int, int]  # (GX, GY, GZ)
    coords: np.ndarray  # (3, E, n, n, n)
    multiplicity: np.ndarray  # (n_global,)

    @property
    def n(self) -> int:
        return self.order + 1

    @property
    def num_elements(self) -> int:
        return len(self.element_domain)

    @property
    def fluid_elements(self) -> np.ndarray:
        return self.element_domain == Domain.FLUID

    @property
    def element_sizes(self) -> np.ndarray:
        """(E, 3) element edge lengths."""
        ix, iy, iz = self.elem_ijk.T
        return np.stack(
            [np.diff(self.xb)[ix], np.diff(self.yb)[iy], np.diff(self.zb)[iz]], axis=1
        )

    @property
    def vertex_coords(self) -> np.ndarray:
        """(E, 8, 3) corner coordinates, x fastest."""
        ix, iy, iz = self.elem_ijk.T
        out = np.empty((self.num_elements, 8, 3))
        for c in range(8):
            a, b, d = c & 1, (c >> 1) & 1, (c >> 2) & 1
            out[:, c, 0] = self.xb[ix + a]
            out[:, c, 1] = self.yb[iy + b]
            out[:, c, 2] = self.zb[iz + d]
        return out

    def lattice_index(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(gx, gy, gz) lattice coordinates of every global id."""
        GX, GY, _ = self.lattice_shape
        g = np.arange(self.n_global)
        return g % GX, (g // GX) % GY, g // (GX * GY)

    def fluid_lattice_range(self) -> tuple[tuple[int, int], tuple[int, int]]:
        N = self.order
        return (
            (self.fluid_cells_y[0] * N, self.fluid_cells_y[1] * N),
            (self.fluid_cells_z[0] * N, self.fluid_cells_z[1] * N),
        )

    def min_spacing(self) -> float:
        """Smallest distance between neighbouring GLL points along any axis."""
        x = gll_basis(self.order).nodes
        dxi = np.min(np.diff(x)) / 2.0
        return float(np.min(self.element_sizes) * dxi)


def build_box_mesh(
    counts,
    L: float = 4.0,
    delta: float = 0.0,
    N: int = 6,
    wall_element_layers: int = 2,
    ha: float | None = None,
    periodic_x: bool = True,
) -> BoxMesh:
    """Fluid box [0,L]x[-1,1]^2 with an optional solid ring of thickness delta.

    The ring of SOLID elements surrounds the fluid on the four walls y = +-1 and
    z = +-1; nothing is added in x.  With ``ha > 20`` the fluid elements are
    geometrically graded in y so that the wall cell is at most 5/Ha thick.
    """
    Ex, Ey, Ez = (int(c) for c in counts)
    if min(Ex, Ey, Ez) < 1:
        raise InvalidExtent(f"element counts must be >= 1, got {counts}")
    if delta < 0:
        raise InvalidExtent(f"wall thickness must be >= 0, got {delta}")
    if L <= 0:
        raise InvalidExtent(f"duct length must be positive, got {L}")
    if N < 1:
        raise InvalidExtent(f"polynomial order must be >= 1, got {N}")
    wl = int(wall_element_layers) if delta > 0 else 0
    if delta > 0 and wl < 1:
        raise InvalidExtent("wall_element_layers must be >= 1 when delta > 0")

    xb = np.linspace(0.0, L, Ex + 1)
    fy = graded_breakpoints(-1.0, 1.0, Ey, hartmann_first_width(ha))
    fz = np.linspace(-1.0, 1.0, Ez + 1)
    if wl:
        wall = np.linspace(0.0, delta, wl + 1)[1:]
        yb = np.concatenate([-1.0 - wall[::-1], fy, 1.0 + wall])
        zb = np.concatenate([-1.0 - wall[::-1], fz, 1.0 + wall])
    else:
        yb, zb = fy, fz
    ny, nz = len(yb) - 1, len(zb) - 1
    fcy = (wl, wl + Ey)
    fcz = (wl, wl + Ez)

    iz, iy, ix = np.meshgrid(np.arange(nz), np.arange(ny), np.arange(Ex), indexing="ij")
    elem_ijk = np.stack([ix.ravel(), iy.ravel(), iz.ravel()], axis=1)
    is_fluid = (
        (elem_ijk[:, 1] >= fcy[0]) & (elem_ijk[:, 1] < fcy[1])
        & (elem_ijk[:, 2] >= fcz[0]) & (elem_ijk[:, 2] < fcz[1])
    )
    domain = np.where(is_fluid, Domain.FLUID, Domain.SOLID).astype(np.int8)

    n = N + 1
    GX = Ex * N if periodic_x else Ex * N + 1
    GY = ny * N + 1
    GZ = nz * N + 1
    loc = np.arange(n)
    gx = elem_ijk[:, 0, None, None, None] * N + loc[None, None, None, :]
    if periodic_x:
        gx = gx % GX
    gy = elem_ijk[:, 1, None, None, None] * N + loc[None, None, :, None]
    gz = elem_ijk[:, 2, None, None, None] * N + loc[None, :, None, None]
    gid = gx + GX * (gy + GY * gz)
    gid = np.ascontiguousarray(np.broadcast_to(gid, (len(domain), n, n, n)))
    n_global = GX * GY * GZ

    xi = gll_basis(N).nodes
    t = (xi + 1.0) / 2.0
    x = xb[elem_ijk[:, 0], None] + np.diff(xb)[elem_ijk[:, 0], None] * t[None, :]
    y = yb[elem_ijk[:, 1], None] + np.diff(yb)[elem_ijk[:, 1], None] * t[None, :]
    z = zb[elem_ijk[:, 2], None] + np.diff(zb)[elem_ijk[:, 2], None] * t[None, :]
    E = len(domain)
    coords = np.empty((3, E, n, n, n))
    coords[0] = x[:, None, None, :]
    coords[1] = y[:, None, :, None]
    coords[2] = z[:, :, None, None]

    mult = np.bincount(gid.ravel(), minlength=n_global).astype(float)
    return BoxMesh(
        counts=(Ex, Ey, Ez), length=float(L), delta=float(delta), order=N,
        wall_layers=wl, periodic_x=periodic_x, xb=xb, yb=yb, zb=zb,
        fluid_cells_y=fcy, fluid_cells_z=fcz, elem_ijk=elem_ijk,
        element_domain=domain, global_ids=gid, n_global=n_global,
        lattice_shape=(GX, GY, GZ), coords=coords, multiplicity=mult,
    )


@dataclass(eq=False)
class GeomFactors:
    """Per-point Jacobian, diagonal metric weights and GLL mass weights.

    ``metric_diag[d]`` holds (dr_d/dx_d)^2 |J| rho_i rho_j rho_k; the
    off-diagonal entries vanish for axis-aligned boxes.
    """

    jacobian: np.ndarray      # (E, n, n, n)
    metric_diag: np.ndarray   # (3, E, n, n, n)
    mass_weight: np.ndarray   # (E, n, n, n)
    rx: np.ndarray            # (E, 3) reference-to-physical derivative scale 2/h

    @property
    def metric(self) -> np.ndarray:
        """Full symmetric (3, 3, E, n, n, n) metric array."""
        g = np.zeros((3, 3) + self.metric_diag.shape[1:])
        for d in range(3):
            g[d, d] = self.metric_diag[d]
        return g


def geometric_factors(mesh: BoxMesh, basis: GllBasis1D | None = None) -> GeomFactors:
    basis = basis or gll_basis(mesh.order)
    if basis.order != mesh.order:
        raise ValueError("basis order does not match mesh order")
    h = mesh.element_sizes
    if np.any(h <= 0):
        raise DegenerateElement("element with non-positive extent")
    n = mesh.n
    jac_e = np.prod(h, axis=1) / 8.0
    w = basis.weights
    w3 = w[:, None, None] * w[None, :, None] * w[None, None, :]
    jac = np.broadcast_to(jac_e[:, None, None, None], (len(jac_e), n, n, n)).copy()
    if np.any(jac <= 0):
        raise DegenerateElement("non-positive Jacobian")
    mass = jac * w3[None]
    rx = 2.0 / h
    metric = np.stack([mass * (rx[:, d] ** 2)[:, None, None, None] for d in range(3)])
    return GeomFactors(jacobian=jac, metric_diag=metric, mass_weight=mass, rx=rx)


def gather(mesh: BoxMesh, field: np.ndarray) -> np.ndarray:
    """Sum local values into a global vector (fixed summation order)."""
    return np.bincount(mesh.global_ids.ravel(), weights=field.ravel(), minlength=mesh.n_global)


def scatter(mesh: BoxMesh, vec: np.ndarray) -> np.ndarray:
    return vec[mesh.global_ids]


def gather_scatter(mesh: BoxMesh, field: np.ndarray) -> np.ndarray:
    """Direct-stiffness summation: coincident points receive the sum of their copies."""
    return scatter(mesh, gather(mesh, field))


# ----------------------------------------------------------------------------
# boundary masks

FACES = ("y-", "y+", "z-", "z+")


@dataclass(eq=False)
class BoundaryMask:
    """Dirichlet/Neumann description of one scalar unknown on global ids.

    ``inactive`` marks points outside the field's domain (e.g. velocity in
    the solid); they are held at zero like Dirichlet points.
    """

    field_kind: str
    component: int | None
    dirichlet: np.ndarray   # bool (n_global,)
    values: np.ndarray      # float (n_global,), zero where not Dirichlet
    inactive: np.ndarray    # bool (n_global,)
    neumann_faces: tuple = ()
    dirichlet_faces: tuple = ()

    @property
    def fixed(self) -> np.ndarray:
        return self.dirichlet | self.inactive

    @property
    def free(self) -> np.ndarray:
        return ~self.fixed

    @property
    def dirichlet_points(self) -> np.ndarray:
        return np.flatnonzero(self.dirichlet)


def face_points(mesh: BoxMesh, region: str) -> dict[str, np.ndarray]:
    """Boolean global-id sets for the four walls of the fluid ('F') or magnetic ('M') domain."""
    gx, gy, gz = mesh.lattice_index()
    GX, GY, GZ = mesh.lattice_shape
    if region == "F":
        (y0, y1), (z0, z1) = mesh.fluid_lattice_range()
    elif region == "M":
        y0, y1, z0, z1 = 0, GY - 1, 0, GZ - 1
    else:
        raise ValueError(region)
    inside = (gy >= y0) & (gy <= y1) & (gz >= z0) & (gz <= z1)
    return {
        "y-": inside & (gy == y0),
        "y+": inside & (gy == y1),
        "z-": inside & (gz == z0),
        "z+": inside & (gz == z1),
        "closure": inside,
    }


def fluid_closure(mesh: BoxMesh) -> np.ndarray:
    return face_points(mesh, "F")["closure"]


def _mask(mesh, kind, comp, dfaces, nfaces, faces, value, inactive):
    d = np.zeros(mesh.n_global, dtype=bool)
    for f in dfaces:
        d |= faces[f]
    d &= ~inactive
    vals = np.where(d, value, 0.0)
    return BoundaryMask(kind, comp, d, vals, inactive.copy(), tuple(nfaces), tuple(dfaces))


def boundary_masks(mesh: BoxMesh, case_spec) -> dict[str, BoundaryMask]:
    """Masks keyed 'u0'..'u2', 'B0'..'B2', 'p', 'q' for the configured case.

    `case_spec` needs ``kind`` in {shercliff, hunt, conducting_wall} and ``B0``.
    """
    kind = str(getattr(case_spec, "kind", case_spec)).lower()
    B0 = float(getattr(case_spec, "B0", 0.0))
    if kind not in ("shercliff", "hunt", "conducting_wall"):
        raise UnknownCase(f"unknown case {kind!r}")
    fF = face_points(mesh, "F")
    fM = face_points(mesh, "M")
    not_fluid = ~fF["closure"]
    none = np.zeros(mesh.n_global, dtype=bool)
    out = {}
    for c in range(3):
        out[f"u{c}"] = _mask(mesh, "velocity", c, FACES, (), fF, 0.0, not_fluid)
    out["p"] = _mask(mesh, "pressure", None, (), FACES, fF, 0.0, not_fluid)
    bval = (0.0, B0, 0.0)
    if kind == "hunt":
        out["B0"] = _mask(mesh, "magnetic", 0, ("z-", "z+"), ("y-", "y+"), fM, 0.0, none)
        for c in (1, 2):
            out[f"B{c}"] = _mask(mesh, "magnetic", c, FACES, (), fM, bval[c], none)
        out["q"] = _mask(mesh, "magnetic_pressure", None, ("y-", "y+"), ("z-", "z+"), fM, 0.0, none)
    else:
        for c in range(3):
            out[f"B{c}"] = _mask(mesh, "magnetic", c, FACES, (), fM, bval[c], none)
        out["q"] = _mask(mesh, "magnetic_pressure", None, (), FACES, fM, 0.0, none)
    return out
