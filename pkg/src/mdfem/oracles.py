"""Brute-force reference computations, independent of the fast paths."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .fem1d import FemSolver, Mesh1D
from .problemspec import ProblemSpec


def gauss_legendre(n: int, tol: float = 1e-14) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on [-1, 1] by Newton iteration on P_n."""
    if n < 1:
        raise ValueError("need at least one node")
    k = np.arange(1, n + 1)
    x = np.cos(np.pi * (k - 0.25) / (n + 0.5))
    for _ in range(100):
        p0 = np.ones_like(x)
        p1 = x.copy()
        for j in range(2, n + 1):
            p0, p1 = p1, ((2 * j - 1) * x * p1 - (j - 1) * p0) / j
        if n == 1:
            p0, p1 = np.ones_like(x), x
        dp = n * (x * p1 - p0) / (x * x - 1)
        dx = p1 / dp
        x = x - dx
        if np.max(np.abs(dx)) < tol:
            break
    p0 = np.ones_like(x)
    p1 = x.copy()
    for j in range(2, n + 1):
        p0, p1 = p1, ((2 * j - 1) * x * p1 - (j - 1) * p0) / j
    if n == 1:
        p0, p1 = np.ones_like(x), x
    dp = n * (x * p1 - p0) / (x * x - 1)
    w = 2.0 / ((1 - x * x) * dp * dp)
    order = np.argsort(x)
    return x[order], w[order]


def tensor_rule(s: int, q: int) -> tuple[np.ndarray, np.ndarray]:
    """Tensor Gauss-Legendre rule with q nodes per axis on [-1/2, 1/2]^s."""
    x, w = gauss_legendre(q)
    x = x / 2.0
    w = w / 2.0
    if s == 0:
        return np.zeros((1, 0)), np.ones(1)
    pts = np.array(list(itertools.product(x, repeat=s)))
    wts = np.prod(np.array(list(itertools.product(w, repeat=s))), axis=1)
    return pts, wts


@dataclass(frozen=True)
class OracleEstimate:
    value: float
    error_estimate: float
    settings: str


MAX_ORACLE_DIM = 8


def tensor_gauss_reference(problem: ProblemSpec, s: int, quad_degree: int = 4,
                           h_fine: float = 2.0 ** -8, degree: int = 2) -> OracleEstimate:
    """E[G(u)] over the first s parameters by tensor Gauss and a fine FEM mesh.

    quad_degree is the number of nodes per axis.  The error estimate adds the
    change from quad_degree -> quad_degree + 2 nodes and from 2 h_fine -> h_fine.
    """
    if s > MAX_ORACLE_DIM:
        raise ValueError(f"tensor oracle limited to s <= {MAX_ORACLE_DIM}, got {s}")
    v = tuple(range(1, s + 1))

    def integrate(q: int, h: float) -> float:
        pts, wts = tensor_rule(s, q)
        solver = FemSolver(problem, Mesh1D.from_h(h, degree))
        vals = solver.functional_subset(v, pts).astype(np.float64)
        return math.fsum(wts * vals)

    base = integrate(quad_degree, h_fine)
    if s == 0:
        dq = 0.0
    else:
        dq = abs(integrate(quad_degree + 2, h_fine) - base)
    dh = abs(integrate(quad_degree, 2 * h_fine) - base)
    return OracleEstimate(base, dq + dh, f"s={s} q={quad_degree} h={h_fine} P{degree}")


def tensor_gauss_integrand(F: Callable[[np.ndarray], np.ndarray], s: int, q: int) -> float:
    pts, wts = tensor_rule(s, q)
    return math.fsum(wts * F(pts))


def subset_sum_bruteforce(weights, M: float, pstar: float, J: int) -> float:
    """sum over all subsets v of {1..J} of (gamma_v M^|v|)^p*."""
    if J > 20:
        raise ValueError("brute force limited to J <= 20")
    total = []
    for r in range(J + 1):
        for v in itertools.combinations(range(1, J + 1), r):
            total.append((weights.gamma_u(v) * M ** r) ** pstar)
    return math.fsum(total)
