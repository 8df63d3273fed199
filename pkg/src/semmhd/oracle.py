"""Finite-difference reference solver for the axially invariant duct problem.

Unknowns are the axial velocity u(y, z) and the scaled axial induced field
b = sqrt(Re/Rm) * B_x on a uniform node grid of spacing h = 2/(n+1):

    Re u_t - lap u - Ha b_y = 1        on the fluid square [-1, 1]^2
    Rm b_t - div(r_w grad b) - Ha u_y = 0   on the magnetic square

5-point Laplacian, central first derivatives, backward Euler in time.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.fft import dst, idst
from scipy.integrate import cumulative_trapezoid
from scipy.linalg import solve_banded

from .history import ProbeHistory

INSULATING = "insulating"
HUNT = "hunt"
CONDUCTING = "conducting"


class UnderResolved(ValueError):
    pass


class OracleInstability(RuntimeError):
    pass


@dataclass(frozen=True)
class BcKind:
    kind: str
    r_w: float = 1.0
    delta: float = 0.0

    def __post_init__(self):
        if self.kind not in (INSULATING, HUNT, CONDUCTING):
            raise ValueError(f"unknown bc kind {self.kind!r}")
        if self.kind == CONDUCTING and (self.delta <= 0 or self.r_w <= 0):
            raise ValueError("conducting walls need delta > 0 and r_w > 0")


def insulating() -> BcKind:
    return BcKind(INSULATING)


def hunt() -> BcKind:
    return BcKind(HUNT)


def conducting(r_w: float, delta: float) -> BcKind:
    return BcKind(CONDUCTING, float(r_w), float(delta))


def as_bc(bc) -> BcKind:
    if isinstance(bc, BcKind):
        return bc
    return BcKind(str(bc).lower())


@dataclass
class OracleGrid2D:
    """Node grid covering the magnetic square, boundary nodes included."""

    n: int                 # interior fluid nodes per direction
    bc: BcKind
    ext: int = 0           # node layers added on each side for the wall
    h: float = 0.0
    coords: np.ndarray = field(default=None, repr=False)
    r_w_cells: np.ndarray = field(default=None, repr=False)
    u_mask: np.ndarray = field(default=None, repr=False)
    b_mask: np.ndarray = field(default=None, repr=False)
    neumann: np.ndarray = field(default=None, repr=False)

    @classmethod
    def build(cls, n: int, bc) -> "OracleGrid2D":
        bc = as_bc(bc)
        if n < 3:
            raise ValueError("need at least 3 interior nodes")
        h = 2.0 / (n + 1)
        ext = 0
        if bc.kind == CONDUCTING:
            ext = int(round(bc.delta / h))
            if ext < 1 or abs(ext * h - bc.delta) > 1e-9 * max(1.0, bc.delta):
                raise ValueError(
                    f"wall thickness {bc.delta} is not a multiple of h = {h}; pick n+1 accordingly")
        total = n + 2 + 2 * ext
        x = -1.0 - ext * h + h * np.arange(total)
        Y, Z = np.meshgrid(x, x, indexing="ij")
        inside = (np.abs(Y) < 1 - 1e-12) & (np.abs(Z) < 1 - 1e-12)
        u_mask = inside.copy()
        interior = np.zeros_like(inside)
        interior[1:-1, 1:-1] = True
        neumann = np.zeros_like(inside)
        if bc.kind == INSULATING:
            b_mask = inside.copy()
        elif bc.kind == HUNT:
            neumann[0, 1:-1] = True
            neumann[-1, 1:-1] = True
            b_mask = inside | neumann
        else:
            b_mask = interior
        cells = np.ones((total - 1, total - 1))
        if bc.kind == CONDUCTING:
            cx = 0.5 * (x[:-1] + x[1:])
            CY, CZ = np.meshgrid(cx, cx, indexing="ij")
            cells = np.where((np.abs(CY) < 1) & (np.abs(CZ) < 1), 1.0, bc.r_w)
        return cls(n, bc, ext, h, x, cells, u_mask, b_mask, neumann)

    @property
    def shape(self):
        return (len(self.coords), len(self.coords))

    @property
    def center(self) -> tuple[int, int]:
        if self.n % 2 == 0:
            raise ValueError("center probe needs an odd interior count")
        c = self.ext + (self.n + 1) // 2
        return c, c


def min_points(Ha: float) -> int:
    return int(math.ceil(8 * Ha))


def check_resolution(Ha: float, n: int):
    if n < min_points(Ha):
        raise UnderResolved(f"n = {n} interior points < 8*Ha = {min_points(Ha)} for Ha = {Ha}")


# ----------------------------------------------------------------------------
# sparse assembly (all boundary kinds)

@dataclass
class _System:
    grid: OracleGrid2D
    K: sp.csr_matrix
    mass_u: np.ndarray   # per-unknown time-derivative weight factors
    is_u: np.ndarray
    rhs: np.ndarray
    u_idx: np.ndarray    # node -> unknown index or -1
    b_idx: np.ndarray


def _assemble(grid: OracleGrid2D, Ha: float) -> _System:
    nu = int(grid.u_mask.sum())
    nb = int(grid.b_mask.sum())
    u_idx = -np.ones(grid.shape, dtype=np.int64)
    b_idx = -np.ones(grid.shape, dtype=np.int64)
    u_idx[grid.u_mask] = np.arange(nu)
    b_idx[grid.b_mask] = nu + np.arange(nb)
    h = grid.h
    ih2 = 1.0 / h ** 2
    rows, cols, vals = [], [], []

    def add(r, c, v):
        keep = c >= 0
        rows.append(r[keep])
        cols.append(c[keep])
        vals.append(np.broadcast_to(v, r.shape)[keep])

    # u rows
    J, Kk = np.nonzero(grid.u_mask)
    r = u_idx[J, Kk]
    add(r, r, np.full(r.shape, 4 * ih2))
    for dj, dk in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        add(r, u_idx[J + dj, Kk + dk], np.full(r.shape, -ih2))
    add(r, b_idx[J + 1, Kk], np.full(r.shape, -Ha / (2 * h)))
    add(r, b_idx[J - 1, Kk], np.full(r.shape, Ha / (2 * h)))

    # b rows: conservative flux form with cell coefficients
    bm = grid.b_mask & ~grid.neumann
    J, Kk = np.nonzero(bm)
    r = b_idx[J, Kk]
    c = grid.r_w_cells
    a_yp = 0.5 * (c[J, Kk - 1] + c[J, Kk])        # edge (j, j+1) at z_k
    a_ym = 0.5 * (c[J - 1, Kk - 1] + c[J - 1, Kk])
    a_zp = 0.5 * (c[J - 1, Kk] + c[J, Kk])
    a_zm = 0.5 * (c[J - 1, Kk - 1] + c[J, Kk - 1])
    add(r, r, (a_yp + a_ym + a_zp + a_zm) * ih2)
    add(r, b_idx[J + 1, Kk], -a_yp * ih2)
    add(r, b_idx[J - 1, Kk], -a_ym * ih2)
    add(r, b_idx[J, Kk + 1], -a_zp * ih2)
    add(r, b_idx[J, Kk - 1], -a_zm * ih2)
    add(r, u_idx[J + 1, Kk], np.full(r.shape, -Ha / (2 * h)))
    add(r, u_idx[J - 1, Kk], np.full(r.shape, Ha / (2 * h)))

    # one-sided second-order Neumann rows at y = -1 (j = 0) and y = +1 (j = last)
    J, Kk = np.nonzero(grid.neumann)
    for sign in (1, -1):
        sel = (J == 0) if sign == 1 else (J > 0)
        j, k = J[sel], Kk[sel]
        r = b_idx[j, k]
        add(r, r, np.full(r.shape, -3.0 * sign / (2 * h)))
        add(r, b_idx[j + sign, k], np.full(r.shape, 4.0 * sign / (2 * h)))
        add(r, b_idx[j + 2 * sign, k], np.full(r.shape, -1.0 * sign / (2 * h)))

    N = nu + nb
    K = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N))
    is_u = np.zeros(N, dtype=bool)
    is_u[:nu] = True
    dyn = np.ones(N)
    dyn[b_idx[grid.neumann]] = 0.0
    rhs = np.where(is_u, 1.0, 0.0)
    return _System(grid, K, dyn, is_u, rhs, u_idx, b_idx)


def _unpack(sysm: _System, x: np.ndarray):
    g = sysm.grid
    u = np.zeros(g.shape)
    b = np.zeros(g.shape)
    u[g.u_mask] = x[sysm.u_idx[g.u_mask]]
    b[g.b_mask] = x[sysm.b_idx[g.b_mask]]
    return u, b


# ----------------------------------------------------------------------------
# fast steady path: sine transform in z, banded solve in y

def _steady_dst(grid: OracleGrid2D, Ha: float):
    n = grid.n
    h = grid.h
    hunt_bc = grid.bc.kind == HUNT
    lam = (2.0 - 2.0 * np.cos(np.pi * np.arange(1, n + 1) / (n + 1))) / h ** 2
    # per-mode unknown layout (interleaved): [b_0?] u_1 b_1 ... u_n b_n [b_{n+1}?]
    off = 1 if hunt_bc else 0
    m = 2 * n + 2 * off

    def pu(j):
        return off + 2 * (j - 1)

    def pb(j):
        if hunt_bc and j == 0:
            return 0
        if hunt_bc and j == n + 1:
            return m - 1
        return off + 2 * (j - 1) + 1

    entries = []   # (row, col, value, takes_lambda)
    ih2 = 1.0 / h ** 2
    for j in range(1, n + 1):
        r = pu(j)
        entries.append((r, r, 2 * ih2, True))
        if j > 1:
            entries.append((r, pu(j - 1), -ih2, False))
        if j < n:
            entries.append((r, pu(j + 1), -ih2, False))
        if j < n or hunt_bc:
            entries.append((r, pb(j + 1), -Ha / (2 * h), False))
        if j > 1 or hunt_bc:
            entries.append((r, pb(j - 1), Ha / (2 * h), False))
        r = pb(j)
        entries.append((r, r, 2 * ih2, True))
        if j > 1 or hunt_bc:
            entries.append((r, pb(j - 1), -ih2, False))
        if j < n or hunt_bc:
            entries.append((r, pb(j + 1), -ih2, False))
        if j < n:
            entries.append((r, pu(j + 1), -Ha / (2 * h), False))
        if j > 1:
            entries.append((r, pu(j - 1), Ha / (2 * h), False))
    if hunt_bc:
        s = 1.0 / (2 * h)
        entries += [(0, 0, -3 * s, False), (0, pb(1), 4 * s, False), (0, pb(2), -s, False)]
        r = m - 1
        entries += [(r, r, 3 * s, False), (r, pb(n), -4 * s, False), (r, pb(n - 1), s, False)]
    rr = np.array([e[0] for e in entries])
    cc = np.array([e[1] for e in entries])
    vv = np.array([e[2] for e in entries])
    tl = np.array([e[3] for e in entries])
    bw = int(np.max(np.abs(rr - cc)))
    nm = n
    total = m * nm
    ab = np.zeros((2 * bw + 1, total))
    base = (np.arange(nm) * m)[:, None]
    R = (base + rr[None]).ravel()
    C = (base + cc[None]).ravel()
    V = (vv[None] + np.where(tl[None], lam[:, None], 0.0)).ravel()
    np.add.at(ab, (bw + R - C, C), V)

    f = np.zeros((nm, m))
    fz = dst(np.ones(n), type=1, norm="ortho")   # transform of the unit forcing in z
    for j in range(1, n + 1):
        f[:, pu(j)] = fz
    x = solve_banded((bw, bw), ab, f.ravel()).reshape(nm, m)
    uy = np.zeros((n + 2, n))
    by = np.zeros((n + 2, n))
    for j in range(1, n + 1):
        uy[j] = x[:, pu(j)]
        by[j] = x[:, pb(j)]
    if hunt_bc:
        by[0] = x[:, 0]
        by[n + 1] = x[:, m - 1]
    u = np.zeros(grid.shape)
    b = np.zeros(grid.shape)
    u[:, 1:-1] = idst(uy, type=1, norm="ortho", axis=1)
    b[:, 1:-1] = idst(by, type=1, norm="ortho", axis=1)
    return u, b


# ----------------------------------------------------------------------------
# public API

@dataclass
class SteadySolution:
    grid: OracleGrid2D
    Ha: float
    u: np.ndarray
    b: np.ndarray

    @property
    def coords(self):
        return self.grid.coords

    def center(self) -> tuple[float, float]:
        c = self.grid.center
        return float(self.u[c]), float(self.b[c])

    def fluid_view(self):
        """(y, z, u, b) restricted to the closed fluid square."""
        e = self.grid.ext
        s = slice(e, len(self.grid.coords) - e)
        x = self.grid.coords[s]
        return x, x, self.u[s, s], self.b[s, s]


def solve_steady_reduced(Ha: float, bc, n: int, method: str = "auto",
                         check: bool = True) -> SteadySolution:
    """Steady (u0, b0) on an n x n interior grid; n odd puts a node at the centre."""
    bc = as_bc(bc)
    if Ha < 0:
        raise ValueError("Ha must be non-negative")
    if check:
        check_resolution(Ha, n)
    grid = OracleGrid2D.build(n, bc)
    if method == "auto":
        method = "dst" if bc.kind in (INSULATING, HUNT) else "sparse"
    if method == "dst":
        if bc.kind == CONDUCTING:
            raise ValueError("transform path needs uniform coefficients")
        u, b = _steady_dst(grid, Ha)
    elif method == "sparse":
        sysm = _assemble(grid, Ha)
        x = spla.spsolve(sysm.K.tocsc(), sysm.rhs)
        u, b = _unpack(sysm, x)
    else:
        raise ValueError(f"unknown method {method!r}")
    return SteadySolution(grid, float(Ha), u, b)


def steady_residual(sol: SteadySolution) -> float:
    """Max-norm residual of the discrete steady equations at the stored solution."""
    sysm = _assemble(sol.grid, sol.Ha)
    x = np.zeros(sysm.K.shape[0])
    g = sol.grid
    x[sysm.u_idx[g.u_mask]] = sol.u[g.u_mask]
    x[sysm.b_idx[g.b_mask]] = sol.b[g.b_mask]
    return float(np.abs(sysm.K @ x - sysm.rhs).max())


@dataclass
class RichardsonResult:
    coarse: SteadySolution
    fine: SteadySolution
    u: np.ndarray          # extrapolated, on the coarse nodes
    b: np.ndarray
    u_error_bar: float     # max |u_fine - u_coarse| / 3
    b_error_bar: float

    @property
    def coords(self):
        return self.coarse.coords

    def center(self) -> tuple[float, float]:
        c = self.coarse.grid.center
        return float(self.u[c]), float(self.b[c])

    def fluid_view(self):
        e = self.coarse.grid.ext
        s = slice(e, len(self.coords) - e)
        return self.coords[s], self.coords[s], self.u[s, s], self.b[s, s]


def richardson(Ha: float, bc, n: int, **kw) -> RichardsonResult:
    """Extrapolate solutions on h = 2/(n+1) and h/2 to O(h^4) on the coarse nodes."""
    c = solve_steady_reduced(Ha, bc, n, **kw)
    f = solve_steady_reduced(Ha, bc, 2 * n + 1, **kw)
    fu, fb = f.u[::2, ::2], f.b[::2, ::2]
    return RichardsonResult(
        c, f, (4 * fu - c.u) / 3, (4 * fb - c.b) / 3,
        float(np.abs(fu - c.u).max() / 3), float(np.abs(fb - c.b).max() / 3),
    )


def convergence_slope(Ha: float, bc, ns=(127, 255, 511), **kw) -> float:
    """Observed order from centre values on three successively halved grids."""
    vals = [solve_steady_reduced(Ha, bc, n, **kw).center()[0] for n in ns]
    return math.log2(abs(vals[1] - vals[0]) / abs(vals[2] - vals[1]))


def solve_transient_reduced(Ha: float, Re: float, Rm: float, bc, n: int,
                            dt: float | None = None, T: float = 1.0,
                            check: bool = True) -> ProbeHistory:
    """Backward-Euler history of the centre values from rest."""
    bc = as_bc(bc)
    if Re <= 0 or Rm <= 0:
        raise ValueError("Re and Rm must be positive")
    if check:
        check_resolution(Ha, n)
    grid = OracleGrid2D.build(n, bc)
    sysm = _assemble(grid, Ha)
    if dt is None:
        dt = grid.h / 2
    m = np.where(sysm.is_u, Re, Rm) * sysm.mass_u
    lu = spla.splu((sp.diags(m / dt) + sysm.K).tocsc())
    cu = sysm.u_idx[grid.center]
    cb = sysm.b_idx[grid.center]
    steps = int(round(T / dt))
    x = np.zeros(sysm.K.shape[0])
    ts = np.zeros(steps + 1)
    us = np.zeros(steps + 1)
    bs = np.zeros(steps + 1)
    for k in range(1, steps + 1):
        x = lu.solve(m * x / dt + sysm.rhs)
        if not np.all(np.isfinite(x)) or np.abs(x).max() > 1e6:
            raise OracleInstability(f"blow-up at step {k}")
        ts[k] = k * dt
        us[k] = x[cu]
        bs[k] = x[cb]
    meta = {"source": "oracle", "Ha": Ha, "Re": Re, "Rm": Rm, "bc": bc.kind, "n": n, "dt": dt}
    return ProbeHistory(ts, us, bs, meta)


def solve_transient_elsasser(Ha: float, Re: float, n: int, dt: float | None = None,
                             T: float = 1.0) -> ProbeHistory:
    """Re = Rm, insulating walls: z+ and z- evolve independently; recombine to (u, b)."""
    grid = OracleGrid2D.build(n, INSULATING)
    h = grid.h
    if dt is None:
        dt = h / 2
    ni = n * n
    lap = sp.kron(_lap1(n, h), sp.identity(n)) + sp.kron(sp.identity(n), _lap1(n, h))
    Dy = sp.kron(_d1(n, h), sp.identity(n))
    f = np.ones(ni)
    c = (n // 2) * n + n // 2
    ops = [spla.splu((sp.identity(ni) * (Re / dt) - lap - s * Ha * Dy).tocsc()) for s in (1, -1)]
    zp = np.zeros(ni)
    zm = np.zeros(ni)
    steps = int(round(T / dt))
    ts = dt * np.arange(steps + 1)
    us = np.zeros(steps + 1)
    bs = np.zeros(steps + 1)
    for k in range(1, steps + 1):
        zp = ops[0].solve(Re * zp / dt + f)
        zm = ops[1].solve(Re * zm / dt + f)
        us[k] = 0.5 * (zp[c] + zm[c])
        bs[k] = 0.5 * (zp[c] - zm[c])
    return ProbeHistory(ts, us, bs, {"source": "oracle-elsasser", "Ha": Ha, "Re": Re, "n": n, "dt": dt})


def _lap1(n, h):
    return sp.diags([np.ones(n - 1), -2 * np.ones(n), np.ones(n - 1)], [-1, 0, 1]) / h ** 2


def _d1(n, h):
    return sp.diags([-np.ones(n - 1), np.ones(n - 1)], [-1, 1]) / (2 * h)


def solve_u0_reaction_diffusion(Ha: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """-lap u0 + Ha^2 u0 = 1 with u0 = 0 on the square; returns (coords, u0) incl. boundary."""
    h = 2.0 / (n + 1)
    lam = (2.0 - 2.0 * np.cos(np.pi * np.arange(1, n + 1) / (n + 1))) / h ** 2
    fh = dst(dst(np.ones((n, n)), type=1, norm="ortho", axis=0), type=1, norm="ortho", axis=1)
    uh = fh / (lam[:, None] + lam[None, :] + Ha ** 2)
    u = np.zeros((n + 2, n + 2))
    u[1:-1, 1:-1] = idst(idst(uh, type=1, norm="ortho", axis=0), type=1, norm="ortho", axis=1)
    return -1.0 + h * np.arange(n + 2), u


def recover_b0(Ha: float, coords: np.ndarray, u0: np.ndarray) -> np.ndarray:
    """b0 with db0/dy = -Ha u0 and b0(0, z) = 0 (odd in y); u0 indexed (y, z)."""
    B = -Ha * cumulative_trapezoid(u0, coords, axis=0, initial=0.0)
    c = len(coords) // 2
    if abs(coords[c]) > 1e-12:
        B -= 0.5 * (B[c - 1] + B[c])
    else:
        B -= B[c]
    return B


def duct_poisson_series(y: float = 0.0, z: float = 0.0, terms: int = 200) -> float:
    """u with -lap u = 1 on [-1,1]^2, u = 0 on the walls, by a cosine series in y."""
    total = 0.0
    for k in range(terms):
        m = 2 * k + 1
        a = 16.0 * (-1) ** k / (m * math.pi) ** 3
        q = m * math.pi / 2
        # 1 - cosh(q z)/cosh(q), written to avoid overflow
        ratio = math.exp(q * (abs(z) - 1)) * (1 + math.exp(-2 * q * abs(z))) / (1 + math.exp(-2 * q))
        total += a * math.cos(q * y) * (1.0 - ratio)
    return total


def duct_poisson_double_series(y: float = 0.0, z: float = 0.0, terms: int = 400) -> float:
    """The same duct solution as a double sine-mode series (slowly convergent cross-check)."""
    k = np.arange(terms)
    m = 2 * k + 1
    q = m * np.pi / 2
    cy = (-1.0) ** k * 4 / (m * np.pi) * np.cos(q * y)
    cz = (-1.0) ** k * 4 / (m * np.pi) * np.cos(q * z)
    lam = q[:, None] ** 2 + q[None, :] ** 2
    return float(np.sum(cy[:, None] * cz[None, :] / lam))


def scale_b(b_sem_axial, Re: float, Rm: float):
    """Oracle b from the SEM axial induced field: b = sqrt(Re/Rm) B_x."""
    return math.sqrt(Re / Rm) * np.asarray(b_sem_axial)
