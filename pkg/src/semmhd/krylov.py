"""Jacobi-preconditioned conjugate gradients on assembled (global) vectors."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .operators import Discretization, stiffness_diagonal


class NoConvergence(RuntimeError):
    def __init__(self, msg, result=None):
        super().__init__(msg)
        self.result = result


class IndefiniteOperator(RuntimeError):
    pass


NONE = "none"
CONSTANTS = "constants"


@dataclass
class LinearSystemSpec:
    """A masked SPD (or SPSD) system A x = b over global ids.

    ``operator`` maps a global vector to a global vector and must return zero
    on fixed (masked) entries.  ``weights`` are the assembled mass entries used
    for the B^-1 residual norm and for mean projection; ``free`` marks unknowns.
    """

    operator: Callable[[np.ndarray], np.ndarray]
    preconditioner: np.ndarray
    free: np.ndarray
    weights: np.ndarray
    rel_tolerance: float = 1e-10
    abs_tolerance: float = 1e-14
    max_iterations: int = 2000
    null_space: str = NONE
    reproject_every: int = 50


@dataclass
class PcgResult:
    solution: np.ndarray
    iterations: int
    residual: float
    converged: bool
    rz_history: list = field(default_factory=list)


def project_mean_zero(x: np.ndarray, weights: np.ndarray, active: np.ndarray | None = None) -> np.ndarray:
    """Subtract the mass-weighted mean over the active points."""
    w = weights if active is None else np.where(active, weights, 0.0)
    mean = np.dot(w, x) / w.sum()
    out = x - mean
    if active is not None:
        out = np.where(active, out, x)
    return out


def _project_rhs(b, w, free):
    # make b orthogonal to the constant vector on free points
    wf = np.where(free, w, 0.0)
    return b - wf * (b[free].sum() / wf.sum())


def weighted_norm(r: np.ndarray, weights: np.ndarray, free: np.ndarray) -> float:
    return float(np.sqrt(np.sum(r[free] ** 2 / weights[free])))


def pcg_solve(spec: LinearSystemSpec, rhs: np.ndarray, initial_guess: np.ndarray | None = None,
              raise_on_failure: bool = True) -> PcgResult:
    """Solve spec.operator(x) = rhs on free entries; fixed entries of the guess are kept."""
    free = spec.free
    w = spec.weights
    x = np.zeros_like(rhs) if initial_guess is None else np.array(initial_guess, dtype=float)
    b = np.where(free, rhs, 0.0)
    nullsp = spec.null_space == CONSTANTS
    if nullsp:
        b = _project_rhs(b, w, free)
        x = project_mean_zero(x, w, free)
    x_fixed = np.where(free, 0.0, x)
    x = np.where(free, x, 0.0)
    bnorm = weighted_norm(b, w, free)
    tol = max(spec.rel_tolerance * bnorm, spec.abs_tolerance)

    r = b - spec.operator(x) if np.any(x) else b.copy()
    r = np.where(free, r, 0.0)
    if nullsp:
        r = _project_rhs(r, w, free)
    res = weighted_norm(r, w, free)
    Minv = np.where(free, 1.0 / np.where(free, spec.preconditioner, 1.0), 0.0)
    it = 0
    rz_hist = []
    p = None
    rz_old = 0.0
    while res > tol and it < spec.max_iterations:
        z = Minv * r
        rz = float(np.dot(r, z))
        rz_hist.append(rz)
        if p is None:
            p = z
        else:
            p = z + (rz / rz_old) * p
        Ap = spec.operator(p)
        Ap = np.where(free, Ap, 0.0)
        pAp = float(np.dot(p, Ap))
        if pAp <= 0.0:
            raise IndefiniteOperator(f"p^T A p = {pAp:.3e} at iteration {it}")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        rz_old = rz
        it += 1
        if nullsp and it % spec.reproject_every == 0:
            x = project_mean_zero(x, w, free)
            r = _project_rhs(r, w, free)
        res = weighted_norm(r, w, free)
    if nullsp:
        x = project_mean_zero(x, w, free)
    x = x + x_fixed
    result = PcgResult(x, it, res, res <= tol, rz_hist)
    if not result.converged and raise_on_failure:
        raise NoConvergence(f"PCG: residual {res:.3e} > {tol:.3e} after {it} iterations", result)
    return result


def assemble_jacobi_diagonal(disc: Discretization, c1: float, c0: float, coeff=None,
                             elem_mask=None) -> np.ndarray:
    """Exact assembled diagonal of c1 A(coeff) + c0 B as a global vector.

    ``elem_mask`` (per element, 0/1) restricts both terms to a subdomain.
    """
    em = np.ones(disc.mesh.num_elements) if elem_mask is None else np.asarray(elem_mask, float)
    c = disc.element_coeff(coeff) * em
    local = c1 * stiffness_diagonal(disc, c) + c0 * em[:, None, None, None] * disc.geom.mass_weight
    return disc.gather(local)
