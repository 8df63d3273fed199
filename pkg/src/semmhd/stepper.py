"""BDFk/EXTk splitting for incompressible MHD in Elsasser form.

Per step: two dealiased advection evaluations (Elsasser rhs), tentative
fields, a pressure and a magnetic-pressure Poisson solve with curl-curl
Neumann data, then three velocity and three magnetic Helmholtz solves.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import logging
import math

import numpy as np

from .krylov import CONSTANTS, NONE, LinearSystemSpec, assemble_jacobi_diagonal, pcg_solve
from .mesh import BoundaryMask, Domain
from .operators import (
    Discretization, advect, curl_curl, divergence, stiffness_apply, weak_divergence,
    weak_gradient,
)

log = logging.getLogger(__name__)

BDF = {
    1: (1.0, -1.0),
    2: (3 / 2, -4 / 2, 1 / 2),
    3: (11 / 6, -18 / 6, 9 / 6, -2 / 6),
}
EXT = {1: (1.0,), 2: (2.0, -1.0), 3: (3.0, -3.0, 1.0)}


DT_HEADROOM = 0.9
# tightest relative Helmholtz tolerance used while marching to steady state
STEADY_TOL_FLOOR = 1e-13


class CflViolation(RuntimeError):
    pass


class Blowup(RuntimeError):
    pass


@dataclass(frozen=True)
class TimeCoeffs:
    order: int
    dt: float
    beta: tuple
    alpha: tuple

    @classmethod
    def uniform(cls, order: int, dt: float) -> "TimeCoeffs":
        if order not in BDF:
            raise ValueError(f"BDF/EXT order must be 1, 2 or 3, got {order}")
        if dt <= 0:
            raise ValueError("dt must be positive")
        return cls(order, float(dt), BDF[order], EXT[order])


@dataclass
class PhysicalParams:
    Re: float
    Rm: float
    B0: float
    r_w: np.ndarray            # per-element magnetic diffusivity ratio
    forcing: float | None = None  # axial body force on the fluid, default 1/Re

    def __post_init__(self):
        if self.Re <= 0 or self.Rm <= 0:
            raise ValueError("Re and Rm must be positive")
        if self.forcing is None:
            self.forcing = 1.0 / self.Re
        self.r_w = np.asarray(self.r_w, dtype=float)
        if np.any(self.r_w <= 0):
            raise ValueError("r_w must be positive")

    @property
    def Ha(self) -> float:
        return self.B0 * math.sqrt(self.Re * self.Rm)

    @property
    def nu_plus(self) -> float:
        return 0.5 * (1.0 / self.Re + 1.0 / self.Rm)

    @property
    def nu_minus(self) -> float:
        return 0.5 * (1.0 / self.Re - 1.0 / self.Rm)


@dataclass
class MhdState:
    time: float
    step_index: int
    u: np.ndarray
    B: np.ndarray
    p: np.ndarray
    q: np.ndarray
    # most recent first; entry 0 of history_u/B is the current u/B
    history_u: list = field(default_factory=list)
    history_B: list = field(default_factory=list)
    history_g: list = field(default_factory=list)
    history_h: list = field(default_factory=list)
    ramp_start: int = 0  # step index at which the current uniform-dt sequence began


@dataclass
class StepRecord:
    step: int
    t: float
    dt: float
    u_center: float
    b_center: float
    div_u: float
    div_B: float
    iters: dict

    def as_dict(self) -> dict:
        return {
            "step": self.step, "t": self.t, "dt": self.dt, "u_center": self.u_center,
            "b_center": self.b_center, "div_u": self.div_u, "div_B": self.div_B,
            "cg_iterations": self.iters,
        }


def boundary_normals(disc: Discretization, region: str) -> np.ndarray:
    """Outward normal times GLL face-quadrature weight, (3, E, n, n, n).

    ``region`` 'F' uses the walls of the fluid elements, 'M' the outer walls
    of the whole mesh.  Summing ``nA[d] * v[d]`` and gathering gives the
    boundary integral of phi_i n.v.
    """
    mesh = disc.mesh
    n = mesh.n
    w = disc.basis.weights
    h = mesh.element_sizes
    iy, iz = mesh.elem_ijk[:, 1], mesh.elem_ijk[:, 2]
    if region == "F":
        active = mesh.fluid_elements
        y0, y1 = mesh.fluid_cells_y[0], mesh.fluid_cells_y[1] - 1
        z0, z1 = mesh.fluid_cells_z[0], mesh.fluid_cells_z[1] - 1
    else:
        active = np.ones(mesh.num_elements, dtype=bool)
        y0, y1 = 0, len(mesh.yb) - 2
        z0, z1 = 0, len(mesh.zb) - 2
    out = np.zeros((3,) + disc.shape)
    wxz = w[:, None] * w[None, :]  # (k, i)
    wxy = w[:, None] * w[None, :]  # (j, i)
    area_y = (h[:, 0] * h[:, 2] / 4.0)[:, None, None] * wxz[None]
    area_z = (h[:, 0] * h[:, 1] / 4.0)[:, None, None] * wxy[None]
    for sel, j, sign in ((active & (iy == y0), 0, -1.0), (active & (iy == y1), n - 1, 1.0)):
        out[1][sel, :, j, :] += sign * area_y[sel]
    for sel, k, sign in ((active & (iz == z0), 0, -1.0), (active & (iz == z1), n - 1, 1.0)):
        out[2][sel, k, :, :] += sign * area_z[sel]
    return out


class MhdSolver:
    """Owns the discretization, masks and solver settings for one run."""

    def __init__(self, disc: Discretization, masks: dict[str, BoundaryMask],
                 params: PhysicalParams, dt: float, order: int = 2, cfl: float = 0.25,
                 adaptive_dt: bool = True, dealias: bool = True,
                 poisson_tol: float = 1e-8, helmholtz_tol: float = 1e-10,
                 poisson_abs_tol: float = 1e-9, helmholtz_abs_tol: float = 1e-14,
                 max_iterations: int = 5000, probe=None):
        self.disc = disc
        self.masks = masks
        self.params = params
        self.user_dt = float(dt)
        self.order = int(order)
        self.cfl = float(cfl)
        self.adaptive_dt = adaptive_dt
        self.dealias = dealias
        self.poisson_tol = poisson_tol
        self.helmholtz_tol = helmholtz_tol
        self.poisson_abs_tol = poisson_abs_tol
        self.helmholtz_abs_tol = helmholtz_abs_tol
        self.max_iterations = max_iterations
        self.probe = probe
        mesh = disc.mesh
        self.fluid_elem = mesh.fluid_elements.astype(float)
        self.fluid_mass = disc.gather(self.fluid_elem[:, None, None, None] * disc.geom.mass_weight)
        self.fluid_points = disc.scatter(~masks["p"].inactive).astype(float)
        self.nA_F = boundary_normals(disc, "F")
        self.nA_M = boundary_normals(disc, "M")
        self.dx_min = mesh.min_spacing()
        self.dt = self._cfl_dt(0.0)
        self._precond_cache = {}
        self.last_iters = {}
        self.records: list[StepRecord] = []

    # ------------------------------------------------------------------ state

    def initial_state(self, u=None, B=None) -> MhdState:
        disc = self.disc
        if u is None:
            u = disc.zeros(vector=True)
        if B is None:
            B = disc.zeros(vector=True)
            B[1] = self.params.B0
        u = self.apply_bc(u, "u")
        B = self.apply_bc(B, "B")
        st = MhdState(0.0, 0, u, B, disc.zeros(), disc.zeros())
        st.history_u = [u]
        st.history_B = [B]
        return st

    def apply_bc(self, f: np.ndarray, name: str) -> np.ndarray:
        out = f.copy()
        for c in range(3):
            m = self.masks[f"{name}{c}"]
            fixed = self.disc.scatter(m.fixed)
            out[c] = np.where(fixed, self.disc.scatter(m.values), f[c])
        return out

    # ------------------------------------------------------------------ timestep size

    def _cfl_dt(self, umax: float) -> float:
        speed = umax + abs(self.params.B0)
        if speed == 0:
            return self.user_dt
        return min(self.user_dt, self.cfl * self.dx_min / speed)

    def coeffs_for(self, state: MhdState) -> TimeCoeffs:
        k = min(self.order, state.step_index - state.ramp_start + 1, len(state.history_u))
        return TimeCoeffs.uniform(max(k, 1), self.dt)

    # ------------------------------------------------------------------ pieces

    def elsasser_rhs(self, state: MhdState):
        """g = rhs^u (incl. forcing), h = rhs^B from two dealiased advections."""
        disc = self.disc
        zp = state.u + state.B
        zm = state.u - state.B
        rhs_p = -advect(disc, zm, zp, self.dealias)
        rhs_m = -advect(disc, zp, zm, self.dealias)
        g_w = 0.5 * (rhs_p + rhs_m)
        h_w = 0.5 * (rhs_p - rhs_m)
        return self.weak_to_strong(g_w, force=True), self.weak_to_strong(h_w)

    def weak_to_strong(self, f_weak: np.ndarray, force: bool = False) -> np.ndarray:
        disc = self.disc
        out = np.stack([disc.scatter(disc.gather(c) / disc.mass_global) for c in f_weak])
        if force:
            out[0] += self.params.forcing * self.fluid_points
        return out

    def primitive_rhs(self, state: MhdState):
        """Four-advection primitive-variable rhs, for cross-checking."""
        disc = self.disc
        u, B = state.u, state.B
        g_w = advect(disc, B, B, self.dealias) - advect(disc, u, u, self.dealias)
        h_w = advect(disc, B, u, self.dealias) - advect(disc, u, B, self.dealias)
        return self.weak_to_strong(g_w, force=True), self.weak_to_strong(h_w)

    def tentative_fields(self, state: MhdState, coeffs: TimeCoeffs):
        k, dt = coeffs.order, coeffs.dt
        uhat = np.zeros_like(state.u)
        Bhat = np.zeros_like(state.B)
        for j in range(1, k + 1):
            b, a = coeffs.beta[j], coeffs.alpha[j - 1]
            uhat += -b * state.history_u[j - 1] + dt * a * state.history_g[j - 1]
            Bhat += -b * state.history_B[j - 1] + dt * a * state.history_h[j - 1]
        return uhat, Bhat

    def _extrapolate(self, hist, coeffs):
        out = np.zeros_like(hist[0])
        for j in range(1, coeffs.order + 1):
            out += coeffs.alpha[j - 1] * hist[j - 1]
        return out

    def _poisson_spec(self, name: str, elem_w: np.ndarray, weights: np.ndarray) -> LinearSystemSpec:
        disc = self.disc
        mask = self.masks[name]
        free = mask.free

        def op(x):
            y = disc.gather(stiffness_apply(disc, disc.scatter(x), elem_w))
            return np.where(free, y, 0.0)

        key = ("poisson", name)
        if key not in self._precond_cache:
            self._precond_cache[key] = assemble_jacobi_diagonal(disc, 1.0, 0.0, elem_mask=elem_w)
        null = CONSTANTS if not mask.dirichlet.any() else NONE
        return LinearSystemSpec(
            op, self._precond_cache[key], free, np.where(weights > 0, weights, 1.0),
            rel_tolerance=self.poisson_tol, abs_tolerance=self.poisson_abs_tol,
            max_iterations=self.max_iterations, null_space=null,
        )

    def pressure_solve(self, uhat: np.ndarray, state: MhdState, coeffs: TimeCoeffs,
                       guess: np.ndarray | None = None) -> np.ndarray:
        """Weak -lap p = -div(uhat)/dt on the fluid with curl-curl Neumann data."""
        disc = self.disc
        dt, beta0 = coeffs.dt, coeffs.beta[0]
        fe = self.fluid_elem[:, None, None, None]
        rhs = -weak_divergence(disc, uhat) * fe / dt
        ub = np.stack([disc.scatter(self.masks[f"u{c}"].values) for c in range(3)])
        cc = curl_curl(disc, self._extrapolate(state.history_u, coeffs))
        bterm = sum(self.nA_F[d] * (beta0 * ub[d] / dt + cc[d] / self.params.Re) for d in range(3))
        rhs = disc.gather(rhs - bterm)
        spec = self._poisson_spec("p", self.fluid_elem, self.fluid_mass)
        x0 = None if guess is None else _global_of(disc, guess)
        res = pcg_solve(spec, rhs, x0)
        self.last_iters["p"] = res.iterations
        return disc.scatter(res.solution)

    def magnetic_pressure_solve(self, Bhat: np.ndarray, state: MhdState, coeffs: TimeCoeffs,
                                guess: np.ndarray | None = None) -> np.ndarray:
        disc = self.disc
        dt, beta0 = coeffs.dt, coeffs.beta[0]
        rhs = -weak_divergence(disc, Bhat) / dt
        Bb = np.stack([disc.scatter(self.masks[f"B{c}"].values) for c in range(3)])
        cc = curl_curl(disc, self._extrapolate(state.history_B, coeffs))
        rw = self.params.r_w[:, None, None, None]
        bterm = sum(self.nA_M[d] * (beta0 * Bb[d] / dt + rw * cc[d] / self.params.Rm) for d in range(3))
        rhs = disc.gather(rhs - bterm)
        spec = self._poisson_spec("q", np.ones(disc.mesh.num_elements), disc.mass_global)
        x0 = None if guess is None else _global_of(disc, guess)
        res = pcg_solve(spec, rhs, x0)
        self.last_iters["q"] = res.iterations
        return disc.scatter(res.solution)

    def _helmholtz(self, name: str, c1: float, c0: float, coeff, rhs_local: np.ndarray,
                   guess: np.ndarray, tag: str) -> np.ndarray:
        disc = self.disc
        mask = self.masks[name]
        free = mask.free
        cvec = disc.element_coeff(coeff)

        def H(x):
            xl = disc.scatter(x)
            return disc.gather(c1 * stiffness_apply(disc, xl, cvec) + c0 * disc.geom.mass_weight * xl)

        key = ("helm", name, c1, c0)
        if key not in self._precond_cache:
            self._precond_cache = {k: v for k, v in self._precond_cache.items() if k[0] != "helm" or k[1] != name}
            self._precond_cache[key] = assemble_jacobi_diagonal(disc, c1, c0, cvec)
        xb = np.where(mask.fixed, mask.values, 0.0)
        rhs = disc.gather(rhs_local) - (H(xb) if xb.any() else 0.0)
        spec = LinearSystemSpec(
            lambda x: np.where(free, H(x), 0.0), self._precond_cache[key], free,
            disc.mass_global, rel_tolerance=self.helmholtz_tol,
            abs_tolerance=self.helmholtz_abs_tol, max_iterations=self.max_iterations,
        )
        x0 = np.where(free, _global_of(disc, guess), 0.0)
        res = pcg_solve(spec, rhs, x0)
        self.last_iters[tag] = res.iterations
        return disc.scatter(np.where(free, res.solution, xb))

    def helmholtz_solve_velocity(self, uhat, p, coeffs: TimeCoeffs, guess=None) -> np.ndarray:
        disc = self.disc
        dt = coeffs.dt
        gp = weak_gradient(disc, p) * self.fluid_elem[None, :, None, None, None]
        B = disc.geom.mass_weight
        guess = uhat / coeffs.beta[0] if guess is None else guess
        return np.stack([
            self._helmholtz(f"u{c}", dt / self.params.Re, coeffs.beta[0], None,
                            B * uhat[c] - dt * gp[c], guess[c], f"u{c}")
            for c in range(3)
        ])

    def helmholtz_solve_magnetic(self, Bhat, q, coeffs: TimeCoeffs, guess=None) -> np.ndarray:
        disc = self.disc
        dt = coeffs.dt
        gq = weak_gradient(disc, q)
        B = disc.geom.mass_weight
        guess = Bhat / coeffs.beta[0] if guess is None else guess
        return np.stack([
            self._helmholtz(f"B{c}", dt / self.params.Rm, coeffs.beta[0], self.params.r_w,
                            B * Bhat[c] - dt * gq[c], guess[c], f"B{c}")
            for c in range(3)
        ])

    # ------------------------------------------------------------------ diagnostics

    def divergence_residual(self, f: np.ndarray, fluid_only: bool) -> float:
        """B^-1 norm of the assembled (phi, div f) over the field's domain."""
        disc = self.disc
        em = self.fluid_elem if fluid_only else np.ones(disc.mesh.num_elements)
        r = disc.gather(em[:, None, None, None] * disc.geom.mass_weight * divergence(disc, f))
        w = self.fluid_mass if fluid_only else disc.mass_global
        act = w > 0
        return float(np.sqrt(np.sum(r[act] ** 2 / w[act])))

    # ------------------------------------------------------------------ driver

    def step(self, state: MhdState) -> MhdState:
        if state.step_index > 0 and state.step_index % 10 == 0:
            self._check_cfl(state)
        g, h = self.elsasser_rhs(state)
        state.history_g.insert(0, g)
        state.history_h.insert(0, h)
        coeffs = self.coeffs_for(state)
        uhat, Bhat = self.tentative_fields(state, coeffs)
        p = self.pressure_solve(uhat, state, coeffs, guess=state.p)
        q = self.magnetic_pressure_solve(Bhat, state, coeffs, guess=state.q)
        u_guess = self._extrapolate(state.history_u, coeffs)
        B_guess = self._extrapolate(state.history_B, coeffs)
        u = self.helmholtz_solve_velocity(uhat, p, coeffs, guess=u_guess)
        B = self.helmholtz_solve_magnetic(Bhat, q, coeffs, guess=B_guess)
        u = self.apply_bc(u, "u")
        B = self.apply_bc(B, "B")
        if not (np.all(np.isfinite(u)) and np.abs(u).max() < 1e6):
            raise Blowup(f"velocity blew up at step {state.step_index + 1}")

        kmax = self.order
        state.history_u.insert(0, u)
        state.history_B.insert(0, B)
        for hist in (state.history_u, state.history_B, state.history_g, state.history_h):
            del hist[kmax:]
        state.u, state.B, state.p, state.q = u, B, p, q
        state.step_index += 1
        state.time += coeffs.dt
        self._record(state, coeffs)
        return state

    def _check_cfl(self, state: MhdState):
        umax = float(np.abs(state.u).max())
        new_dt = self._cfl_dt(umax)
        if new_dt < self.dt * (1 - 1e-12):
            # 10% headroom so that slow growth of |u| does not restart the ramp every check
            new_dt = min(new_dt, DT_HEADROOM * self._cfl_dt(umax))
            if not self.adaptive_dt:
                raise CflViolation(
                    f"CFL {(umax + abs(self.params.B0)) * self.dt / self.dx_min:.3f} exceeds {self.cfl}")
            log.info("reducing dt %.3e -> %.3e at step %d", self.dt, new_dt, state.step_index)
            self.dt = new_dt
            state.ramp_start = state.step_index
            state.history_u[1:] = []
            state.history_B[1:] = []
            state.history_g[:] = []
            state.history_h[:] = []

    def _record(self, state: MhdState, coeffs: TimeCoeffs):
        uc, bc = self.probe(state) if self.probe is not None else (float("nan"), float("nan"))
        rec = StepRecord(
            state.step_index, state.time, coeffs.dt, uc, bc,
            self.divergence_residual(state.u, True), self.divergence_residual(state.B, False),
            dict(self.last_iters),
        )
        self.records.append(rec)
        log.debug("%s", rec.as_dict())

    def run(self, state: MhdState, t_end: float, callback=None) -> MhdState:
        while state.time < t_end - 1e-12 * max(1.0, t_end):
            self.step(state)
            if callback is not None:
                callback(state)
        return state

    def march_to_steady(self, state: MhdState, criterion: float = 1e-8, t_max: float = 20.0,
                        callback=None):
        """Step until max|u^n - u^{n-1}|/dt and max|B^n - B^{n-1}|/dt <= criterion.

        A Helmholtz solve error e shows up as e/dt in the change metric, so the
        Helmholtz tolerance is tightened to about 0.1*criterion*dt while marching.
        Returns (state, converged).
        """
        converged = False
        base_tol = self.helmholtz_tol
        try:
            while state.time < t_max:
                self.helmholtz_tol = min(base_tol, max(STEADY_TOL_FLOOR, 0.1 * criterion * self.dt))
                u_old, B_old = state.u, state.B
                self.step(state)
                if callback is not None:
                    callback(state)
                dt = self.records[-1].dt
                change = max(np.abs(state.u - u_old).max(), np.abs(state.B - B_old).max()) / dt
                if change <= criterion:
                    converged = True
                    break
        finally:
            self.helmholtz_tol = base_tol
        if not converged:
            log.warning("not converged to steady state by t = %g", state.time)
        return state, converged


def _global_of(disc: Discretization, f: np.ndarray) -> np.ndarray:
    """Global vector from a continuous local field (averaging copies)."""
    return disc.gather(f) / disc.mesh.multiplicity
