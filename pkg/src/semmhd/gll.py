"""Gauss-Lobatto-Legendre nodal basis on the reference interval [-1, 1]."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
import math

import numpy as np


class InvalidOrder(ValueError):
    pass


class NodeOutOfRange(ValueError):
    pass


def _legendre(n: int, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return (P_n(x), P_{n-1}(x)) by the three-term recurrence."""
    p_prev = np.ones_like(x)
    p = x.copy()
    if n == 0:
        return p_prev, np.zeros_like(x)
    for k in range(2, n + 1):
        p_prev, p = p, ((2 * k - 1) * x * p - (k - 1) * p_prev) / k
    return p, p_prev


def gll_nodes_weights(N: int, tol: float = 1e-15, maxiter: int = 100):
    """GLL nodes (roots of (1-x^2) P'_N) and weights 2/(N(N+1) P_N^2).

    Newton iteration in the form used by Canuto et al., started from the
    Chebyshev-Gauss-Lobatto points.
    """
    if N < 1:
        raise InvalidOrder(f"GLL order must be >= 1, got {N}")
    x = -np.cos(np.pi * np.arange(N + 1) / N)
    for _ in range(maxiter):
        p, p_prev = _legendre(N, x)
        dx = (x * p - p_prev) / ((N + 1) * p)
        x = x - dx
        if np.max(np.abs(dx)) < tol:
            break
    # enforce exact endpoints and symmetry
    x[0], x[-1] = -1.0, 1.0
    x = 0.5 * (x - x[::-1])
    p, _ = _legendre(N, x)
    w = 2.0 / (N * (N + 1) * p**2)
    w = 0.5 * (w + w[::-1])
    return x, w


def barycentric_weights(nodes: np.ndarray) -> np.ndarray:
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    return 1.0 / np.prod(diff, axis=1)


def lagrange_matrix(nodes: np.ndarray, points) -> np.ndarray:
    """J[m, i] = h_i(points[m]) for the Lagrange cardinal functions on `nodes`."""
    points = np.atleast_1d(np.asarray(points, dtype=float))
    lam = barycentric_weights(nodes)
    diff = points[:, None] - nodes[None, :]
    exact = diff == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = lam[None, :] / diff
        J = terms / terms.sum(axis=1, keepdims=True)
    hit = exact.any(axis=1)
    J[hit] = exact[hit].astype(float)
    return J


@dataclass(frozen=True)
class InterpMatrix:
    coarse_order: int
    fine_count: int
    matrix: np.ndarray


@dataclass(frozen=True, eq=False)
class GllBasis1D:
    """Nodes, weights and derivative matrix of the order-N GLL basis.

    ``diff_matrix[i, j]`` is h_j'(xi_i).  Also carries the Gauss-Legendre
    dealiasing grid of size ``ceil(3(N+1)/2)`` and the interpolation onto it.
    """

    order: int
    nodes: np.ndarray
    weights: np.ndarray
    diff_matrix: np.ndarray
    fine_nodes: np.ndarray
    fine_weights: np.ndarray
    fine_interp: np.ndarray  # (M, N+1)
    fine_diff: np.ndarray    # (M, N+1): derivatives of h_j at fine nodes

    @property
    def n(self) -> int:
        return self.order + 1

    @property
    def fine_count(self) -> int:
        return len(self.fine_nodes)


def derivative_matrix(basis_or_nodes) -> np.ndarray:
    """D[i, j] = h_j'(x_i) for the GLL cardinal functions."""
    if isinstance(basis_or_nodes, GllBasis1D):
        x = basis_or_nodes.nodes
    else:
        x = np.asarray(basis_or_nodes, dtype=float)
    N = len(x) - 1
    p, _ = _legendre(N, x)
    D = np.zeros((N + 1, N + 1))
    for i in range(N + 1):
        for j in range(N + 1):
            if i != j:
                D[i, j] = p[i] / (p[j] * (x[i] - x[j]))
    D[0, 0] = -N * (N + 1) / 4.0
    D[N, N] = N * (N + 1) / 4.0
    return D


def dealias_count(N: int) -> int:
    return math.ceil(3 * (N + 1) / 2)


def interp_matrix(basis: GllBasis1D, fine_nodes) -> InterpMatrix:
    fine_nodes = np.asarray(fine_nodes, dtype=float)
    if np.any(np.abs(fine_nodes) > 1.0 + 1e-14):
        raise NodeOutOfRange("interpolation points must lie in [-1, 1]")
    J = lagrange_matrix(basis.nodes, fine_nodes)
    return InterpMatrix(basis.order, len(fine_nodes), J)


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@lru_cache(maxsize=None)
def gll_basis(N: int) -> GllBasis1D:
    x, w = gll_nodes_weights(N)
    D = derivative_matrix(x)
    xf, wf = np.polynomial.legendre.leggauss(dealias_count(N))
    J = lagrange_matrix(x, xf)
    return GllBasis1D(
        order=N,
        nodes=_readonly(x),
        weights=_readonly(w),
        diff_matrix=_readonly(D),
        fine_nodes=_readonly(xf),
        fine_weights=_readonly(wf),
        fine_interp=_readonly(J),
        fine_diff=_readonly(J @ D),
    )
