"""The three duct experiments: Shercliff, Hunt and the conducting-wall duct."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
import math

import numpy as np

from .gll import lagrange_matrix
from .mesh import BoxMesh, Domain, boundary_masks, build_box_mesh
from .operators import Discretization
from .stepper import MhdSolver, MhdState, PhysicalParams

SHERCLIFF = "shercliff"
HUNT = "hunt"
CONDUCTING_WALL = "conducting_wall"
KINDS = (SHERCLIFF, HUNT, CONDUCTING_WALL)


class InvalidCombination(ValueError):
    pass


class UnknownField(ValueError):
    pass


@dataclass
class CaseSpec:
    kind: str = SHERCLIFF
    Ha: float = 10.0
    Re: float = 1.0
    Rm: float = 1.0
    r_w_solid: float = 1e2
    delta: float = 0.0
    L: float = 4.0
    mesh_counts: tuple = (4, 10, 10)
    N: int = 6
    wall_layers: int = 2
    grade: bool = True
    dt: float = 1e-3          # upper bound on the timestep
    cfl: float = 0.25
    order: int = 2
    t_max: float = 20.0
    steady_tol: float = 1e-8

    def __post_init__(self):
        self.kind = self.kind.lower().replace("-", "_")
        self.mesh_counts = tuple(int(c) for c in self.mesh_counts)
        self.validate()

    def validate(self):
        if self.kind not in KINDS:
            raise InvalidCombination(f"unknown case kind {self.kind!r}")
        for name in ("Re", "Rm", "L", "dt", "cfl", "t_max", "steady_tol"):
            if getattr(self, name) <= 0:
                raise InvalidCombination(f"{name} must be positive")
        if self.Ha < 0:
            raise InvalidCombination("Ha must be non-negative")
        if self.kind in (SHERCLIFF, HUNT) and self.delta != 0:
            raise InvalidCombination(f"{self.kind} requires delta = 0 (magnetic domain = fluid domain)")
        if self.kind == CONDUCTING_WALL and self.delta <= 0:
            raise InvalidCombination("conducting_wall requires delta > 0")
        if self.r_w_solid <= 0:
            raise InvalidCombination("r_w_solid must be positive")

    @property
    def B0(self) -> float:
        return self.Ha / math.sqrt(self.Re * self.Rm)

    def with_(self, **kw) -> "CaseSpec":
        return replace(self, **kw)


def conducting_wall_spec(**kw) -> CaseSpec:
    kw.setdefault("delta", 0.2)
    return CaseSpec(kind=CONDUCTING_WALL, **kw)


class PointSampler:
    """Lagrange interpolation of element-local fields at fixed physical points."""

    def __init__(self, mesh: BoxMesh, points: np.ndarray):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        self.elements, self.weights = _locate(mesh, points)

    def __call__(self, f: np.ndarray) -> np.ndarray:
        wx, wy, wz = self.weights
        fe = f[self.elements]  # (P, n, n, n)
        return np.einsum("pkji,pi,pj,pk->p", fe, wx, wy, wz)


def _locate(mesh: BoxMesh, pts: np.ndarray):
    from .gll import gll_basis

    nodes = gll_basis(mesh.order).nodes
    idx, wts = [], []
    for d, br in enumerate((mesh.xb, mesh.yb, mesh.zb)):
        c = pts[:, d]
        if d == 0 and mesh.periodic_x:
            c = np.mod(c - br[0], br[-1] - br[0]) + br[0]
        if np.any(c < br[0] - 1e-12) or np.any(c > br[-1] + 1e-12):
            raise ValueError("sample point outside the mesh")
        i = np.clip(np.searchsorted(br, c, side="right") - 1, 0, len(br) - 2)
        r = 2.0 * (c - br[i]) / (br[i + 1] - br[i]) - 1.0
        idx.append(i)
        wts.append(lagrange_matrix(nodes, np.clip(r, -1.0, 1.0)))
    Ex = len(mesh.xb) - 1
    ny = len(mesh.yb) - 1
    e = idx[0] + Ex * (idx[1] + ny * idx[2])
    return e, wts


class CenterProbe:
    """Axial velocity and axial magnetic field on the duct centreline (y = z = 0).

    Values are averaged over the GLL x-stations of the first element column.
    """

    def __init__(self, mesh: BoxMesh):
        from .gll import gll_basis

        xs = mesh.xb[0] + (gll_basis(mesh.order).nodes + 1) / 2 * (mesh.xb[1] - mesh.xb[0])
        pts = np.stack([xs, np.zeros_like(xs), np.zeros_like(xs)], axis=1)
        self.sampler = PointSampler(mesh, pts)

    def __call__(self, state: MhdState):
        return float(self.sampler(state.u[0]).mean()), float(self.sampler(state.B[0]).mean())


def center_probe(state: MhdState, mesh: BoxMesh):
    """(t, u_axial_center, b_axial_center)."""
    uc, bc = CenterProbe(mesh)(state)
    return state.time, uc, bc


def sample_cross_section(mesh: BoxMesh, f: np.ndarray, x: float, ys, zs) -> np.ndarray:
    """Values of f at (x, ys[a], zs[b]) for tensor grids ys x zs; shape (len(ys), len(zs))."""
    from .gll import gll_basis

    nodes = gll_basis(mesh.order).nodes
    ys = np.asarray(ys, dtype=float)
    zs = np.asarray(zs, dtype=float)
    xb, yb, zb = mesh.xb, mesh.yb, mesh.zb
    Ex, ny = len(xb) - 1, len(yb) - 1
    xc = np.mod(x - xb[0], xb[-1] - xb[0]) + xb[0] if mesh.periodic_x else x
    ix = int(np.clip(np.searchsorted(xb, xc, side="right") - 1, 0, Ex - 1))
    wx = lagrange_matrix(nodes, [2 * (xc - xb[ix]) / (xb[ix + 1] - xb[ix]) - 1])[0]
    iy = np.clip(np.searchsorted(yb, ys, side="right") - 1, 0, ny - 1)
    iz = np.clip(np.searchsorted(zb, zs, side="right") - 1, 0, len(zb) - 2)
    out = np.full((len(ys), len(zs)), np.nan)
    for ey in np.unique(iy):
        sy = np.flatnonzero(iy == ey)
        Wy = lagrange_matrix(nodes, np.clip(2 * (ys[sy] - yb[ey]) / (yb[ey + 1] - yb[ey]) - 1, -1, 1))
        for ez in np.unique(iz):
            sz = np.flatnonzero(iz == ez)
            Wz = lagrange_matrix(nodes, np.clip(2 * (zs[sz] - zb[ez]) / (zb[ez + 1] - zb[ez]) - 1, -1, 1))
            e = ix + Ex * (ey + ny * ez)
            plane = f[e] @ wx  # (k, j)
            out[np.ix_(sy, sz)] = Wy @ plane.T @ Wz.T
    return out


FIELD_NAMES = ("u_x", "B_x", "p", "q")


def extract_cross_section(state: MhdState, mesh: BoxMesh, field_name: str, x_station: float,
                          npts: int = 41):
    """(ys, zs, values) on a uniform grid covering the field's domain."""
    if field_name not in FIELD_NAMES:
        raise UnknownField(f"unknown field {field_name!r}; expected one of {FIELD_NAMES}")
    f = {"u_x": state.u[0], "B_x": state.B[0], "p": state.p, "q": state.q}[field_name]
    if field_name in ("u_x", "p"):
        lo, hi = -1.0, 1.0
    else:
        lo, hi = mesh.yb[0], mesh.yb[-1]
    ys = np.linspace(lo, hi, npts)
    zs = np.linspace(lo, hi, npts)
    return ys, zs, sample_cross_section(mesh, f, x_station, ys, zs)


@dataclass(eq=False)
class Case:
    spec: CaseSpec
    mesh: BoxMesh
    disc: Discretization
    masks: dict
    r_w: np.ndarray
    params: PhysicalParams
    solver: MhdSolver
    state: MhdState
    probe: CenterProbe


def make_case(spec: CaseSpec, **solver_kw) -> Case:
    spec.validate()
    mesh = build_box_mesh(
        spec.mesh_counts, L=spec.L, delta=spec.delta, N=spec.N,
        wall_element_layers=spec.wall_layers, ha=spec.Ha if spec.grade else None,
    )
    disc = Discretization.from_mesh(mesh)
    masks = boundary_masks(mesh, spec)
    r_w = np.where(mesh.element_domain == Domain.FLUID, 1.0, spec.r_w_solid)
    params = PhysicalParams(spec.Re, spec.Rm, spec.B0, r_w)
    probe = CenterProbe(mesh)
    solver = MhdSolver(disc, masks, params, dt=spec.dt, order=spec.order, cfl=spec.cfl,
                       probe=probe, **solver_kw)
    state = solver.initial_state()
    return Case(spec, mesh, disc, masks, r_w, params, solver, state, probe)
