"""Lagrange finite elements for -(a u')' = f on (0, 1), u(0) = u(1) = 0.

Solves are batched over parameter vectors: assembly is vectorised with
einsum and the banded SPD systems are factorised row by row with every
numpy operation acting on the whole batch.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss

from .problemspec import Functional, ProblemSpec


class FemError(ArithmeticError):
    pass


@dataclass(frozen=True)
class Mesh1D:
    n_el: int
    degree: int = 1

    def __post_init__(self):
        if self.n_el < 1:
            raise ValueError("need at least one element")
        if self.degree not in (1, 2, 3):
            raise ValueError("element degree must be 1, 2 or 3")

    @classmethod
    def from_h(cls, h: float, degree: int = 1) -> "Mesh1D":
        n = int(round(1.0 / h))
        if abs(n * h - 1.0) > 1e-12:
            raise ValueError(f"h = {h} does not divide the unit interval")
        return cls(n, degree)

    @property
    def h(self) -> float:
        return 1.0 / self.n_el

    @property
    def n_nodes(self) -> int:
        return self.n_el * self.degree + 1

    @property
    def dof_count(self) -> int:
        return self.n_nodes - 2

    @property
    def nodes(self) -> np.ndarray:
        # integer numerators keep the node positions exact multiples of 1/(n_el*degree)
        return np.arange(self.n_nodes) / (self.n_el * self.degree)

    def fingerprint(self) -> str:
        return f"P{self.degree}-{self.n_el}"


def nesting_mesh(h: float, degree: int) -> Mesh1D:
    """Largest mesh of width 2^-k (k >= 1) not exceeding h."""
    if h <= 0:
        raise ValueError("mesh width must be positive")
    k = max(1, math.ceil(-math.log2(h) - 1e-12))
    return Mesh1D(1 << k, degree)


def _lagrange_tables(p: int, t: np.ndarray, dtype=np.float64) -> tuple[np.ndarray, np.ndarray]:
    """Values and derivatives of the equispaced Lagrange basis on [0, 1] at t."""
    t = np.asarray(t, dtype=dtype)
    xi = np.arange(p + 1, dtype=dtype) / dtype(p)
    V = np.ones((p + 1, t.size), dtype=dtype)
    D = np.zeros((p + 1, t.size), dtype=dtype)
    for i in range(p + 1):
        others = [k for k in range(p + 1) if k != i]
        denom = np.prod([xi[i] - xi[k] for k in others])
        for k in others:
            V[i] *= t - xi[k]
        for skip in others:
            term = np.ones_like(t)
            for k in others:
                if k != skip:
                    term = term * (t - xi[k])
            D[i] += term
        V[i] /= denom
        D[i] /= denom
    return V, D


@dataclass
class FemSolution:
    coefficients: np.ndarray  # all nodal values including the two boundary zeros
    mesh: Mesh1D
    param_fingerprint: str

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        e = np.minimum((x * self.mesh.n_el).astype(int), self.mesh.n_el - 1)
        t = x * self.mesh.n_el - e
        p = self.mesh.degree
        out = np.zeros_like(x)
        for i in range(p + 1):
            V, _ = _lagrange_tables(p, t)
            out += V[i] * self.coefficients[e * p + i]
        return out


def param_fingerprint(u: Sequence[int], y: Sequence[float]) -> str:
    h = hashlib.sha256()
    h.update(np.asarray(u, dtype=np.int64).tobytes())
    h.update(np.asarray(y, dtype=np.float64).tobytes())
    return h.hexdigest()[:16]


def banded_cholesky_solve(band: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve batched SPD systems stored as lower bands.

    band[b, i, d] holds A_b[i, i - d] for d = 0..w; rhs has shape (n,) or (B, n).
    """
    B, n, w1 = band.shape
    w = w1 - 1
    L = band.copy()
    for i in range(n):
        for d in range(min(i, w), 0, -1):
            j = i - d
            s = L[:, i, d].copy()
            # columns k shared by rows i and j inside both bands
            for k in range(max(i - w, j - w, 0), j):
                s -= L[:, i, i - k] * L[:, j, j - k]
            L[:, i, d] = s / L[:, j, 0]
        s = L[:, i, 0].copy()
        for d in range(1, min(i, w) + 1):
            s -= L[:, i, d] ** 2
        if np.any(s <= 0):
            raise FemError("stiffness matrix is not positive definite")
        L[:, i, 0] = np.sqrt(s)
    z = np.broadcast_to(rhs, (B, n)).astype(band.dtype).copy()
    for i in range(n):
        for d in range(1, min(i, w) + 1):
            z[:, i] -= L[:, i, d] * z[:, i - d]
        z[:, i] /= L[:, i, 0]
    for i in range(n - 1, -1, -1):
        for d in range(1, min(n - 1 - i, w) + 1):
            z[:, i] -= L[:, i + d, d] * z[:, i + d]
        z[:, i] /= L[:, i, 0]
    return z


class FemSolver:
    """Assemble-and-solve engine for one problem on one mesh."""

    max_batch_entries = 4_000_000

    def __init__(self, problem: ProblemSpec, mesh: Mesh1D, n_params: int | None = None,
                 dtype=np.float64):
        self.problem = problem
        self.mesh = mesh
        self.dtype = dtype
        p = mesh.degree
        nq = p + 3  # exact for degree 2p + 5 >= 2p + 4
        t, w = leggauss(nq)
        self.tq = (t + 1.0) / 2.0
        self.wq = w / 2.0
        # derivative tables in the working precision: their rows must cancel to
        # that precision or the h^-2 conditioning amplifies the defect
        self.V, D = _lagrange_tables(p, self.tq, dtype)
        h = mesh.h
        e = np.arange(mesh.n_el)
        self.xq = (e[:, None] + self.tq[None, :]) * h  # (n_el, nq)
        # W[q, i, k] = w_q phi_i'(t_q) phi_k'(t_q) / h
        self.W = np.einsum("q,iq,kq->qik", self.wq.astype(dtype), D, D) * dtype(mesh.n_el)
        self.a0q = problem.model.a0_eval(self.xq).astype(dtype)
        self._phiq: np.ndarray | None = None
        self.n_params = n_params
        self.load = self._assemble_vector(problem.f)
        self.gvec = self._functional_vector(problem.G)

    def _nodes_of(self, e: np.ndarray, i: int) -> np.ndarray:
        return e * self.mesh.degree + i

    def _assemble_vector(self, fn, nq_extra: int = 0) -> np.ndarray:
        p = self.mesh.degree
        nq = p + 6 + nq_extra
        t, w = leggauss(nq)
        t = (t + 1.0) / 2.0
        w = w / 2.0
        V, _ = _lagrange_tables(p, t)
        e = np.arange(self.mesh.n_el)
        x = (e[:, None] + t[None, :]) * self.mesh.h
        fx = np.asarray(fn(x), dtype=float) * np.ones_like(x)
        out = np.zeros(self.mesh.n_nodes, dtype=self.dtype)
        for i in range(p + 1):
            np.add.at(out, self._nodes_of(e, i), self.mesh.h * (fx * V[i][None, :]).astype(self.dtype) @ w.astype(self.dtype))
        return out[1:-1]

    def _functional_vector(self, G: Functional) -> np.ndarray:
        extra = 0
        if G.kind == "point":
            # the bump is only C-infinity, not polynomial: resolve it with more points
            extra = 10
        return self._assemble_vector(G.g, extra)

    def phi_at_quadrature(self, J: int) -> np.ndarray:
        """phi_j at the quadrature points, shape (J, n_el, nq)."""
        if self._phiq is None or self._phiq.shape[0] < J:
            flat = self.problem.model.phi_matrix(J, self.xq.ravel())
            self._phiq = flat.reshape(J, *self.xq.shape).astype(self.dtype)
        return self._phiq[:J]

    def coefficient(self, Y: np.ndarray) -> np.ndarray:
        """a(x_q, y) for a batch Y of shape (B, J)."""
        Y = np.atleast_2d(np.asarray(Y, dtype=float)).astype(self.dtype)
        J = Y.shape[1]
        a = np.broadcast_to(self.a0q, (Y.shape[0],) + self.a0q.shape).copy()
        if J:
            a += np.einsum("bj,jeq->beq", Y, self.phi_at_quadrature(J))
        return a

    def assemble_band(self, Y: np.ndarray) -> np.ndarray:
        return self._band_from_coefficient(self.coefficient(Y))

    def _band_from_coefficient(self, a: np.ndarray) -> np.ndarray:
        if np.any(a <= 0):
            raise FemError("ellipticity violated: a(x, y) <= 0 at a quadrature point")
        Ke = np.einsum("beq,qik->beik", a, self.W)
        p = self.mesh.degree
        B = a.shape[0]
        band = np.zeros((B, self.mesh.n_nodes, p + 1), dtype=self.dtype)
        e = np.arange(self.mesh.n_el)
        for i in range(p + 1):
            rows = self._nodes_of(e, i)
            for k in range(i + 1):
                band[:, rows, i - k] += Ke[:, :, i, k]
        band = band[:, 1:-1, :]
        # couplings to the removed node 0 sit above the first rows' reach
        for r in range(min(p, band.shape[1])):
            band[:, r, r + 1:] = 0.0
        return band

    def solve_batch(self, Y: np.ndarray) -> np.ndarray:
        """Interior nodal values for each row of Y, shape (B, dof_count)."""
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        per_row = self.mesh.n_el * (self.mesh.degree + 3) * max(1, self.mesh.degree + 1) ** 2
        chunk = max(1, self.max_batch_entries // per_row)
        out = np.empty((Y.shape[0], self.mesh.dof_count), dtype=self.dtype)
        for s in range(0, Y.shape[0], chunk):
            band = self.assemble_band(Y[s:s + chunk])
            out[s:s + chunk] = banded_cholesky_solve(band, self.load)
        return out

    def functional_batch(self, Y: np.ndarray) -> np.ndarray:
        # einsum rather than BLAS so each row's sum order never depends on the batch
        return np.einsum("bi,i->b", self.solve_batch(Y), self.gvec)

    def functional_subset(self, v: Sequence[int], Yv: np.ndarray) -> np.ndarray:
        """G(u_h) for parameters y_j = Yv[:, i] at j = v[i] and zero elsewhere."""
        Yv = np.atleast_2d(np.asarray(Yv, dtype=float))
        if len(v) == 0:
            Yv = np.zeros((Yv.shape[0], 0))
        phis = self._phi_rows(tuple(v))
        per_row = self.mesh.n_el * (self.mesh.degree + 3) * (self.mesh.degree + 1) ** 2
        chunk = max(1, self.max_batch_entries // per_row)
        out = np.empty(Yv.shape[0], dtype=self.dtype)
        for s in range(0, Yv.shape[0], chunk):
            Yc = Yv[s:s + chunk].astype(self.dtype)
            a = np.broadcast_to(self.a0q, (Yc.shape[0],) + self.a0q.shape).copy()
            for i in range(len(v)):
                a += Yc[:, i, None, None] * phis[i][None]
            band = self._band_from_coefficient(a)
            out[s:s + chunk] = np.einsum("bi,i->b", banded_cholesky_solve(band, self.load), self.gvec)
        return out

    def _phi_rows(self, v: tuple[int, ...]) -> list[np.ndarray]:
        if not hasattr(self, "_phi_cache"):
            self._phi_cache: dict[int, np.ndarray] = {}
        out = []
        for j in v:
            if j not in self._phi_cache:
                self._phi_cache[j] = self.problem.model.phi(j, self.xq.ravel()).reshape(self.xq.shape).astype(self.dtype)
            out.append(self._phi_cache[j])
        return out

    def solve(self, y: Sequence[float], u: Sequence[int] | None = None) -> FemSolution:
        y = np.asarray(y, dtype=float)
        U = self.solve_batch(y[None, :])[0]
        coeffs = np.concatenate([[0.0], U, [0.0]])
        if u is None:
            u = range(1, len(y) + 1)
        return FemSolution(coeffs, self.mesh, param_fingerprint(list(u), y))


def _scatter(u: Sequence[int], yu: Sequence[float]) -> np.ndarray:
    J = max(u, default=0)
    y = np.zeros(J)
    for j, v in zip(u, yu):
        y[j - 1] = v
    return y


def assemble_solve(problem: ProblemSpec, u: Sequence[int], yu: Sequence[float], mesh: Mesh1D) -> FemSolution:
    """Galerkin solution with y_j = yu for j in u and y_j = 0 otherwise."""
    yu = np.asarray(yu, dtype=float)
    if np.any(np.abs(yu) > 0.5):
        raise ValueError("parameter values must lie in [-1/2, 1/2]")
    y = _scatter(u, yu)
    sol = FemSolver(problem, mesh).solve(y, u)
    sol.param_fingerprint = param_fingerprint(list(u), yu)
    return sol


def apply_functional(G: Functional, sol: FemSolution) -> float:
    """integral of g u_h over (0, 1) with Gauss quadrature on each element."""
    mesh = sol.mesh
    p = mesh.degree
    nq = p + 6 + (10 if G.kind == "point" else 0)
    t, w = leggauss(nq)
    t = (t + 1.0) / 2.0
    w = w / 2.0
    V, _ = _lagrange_tables(p, t)
    e = np.arange(mesh.n_el)
    x = (e[:, None] + t[None, :]) * mesh.h
    uh = np.zeros_like(x)
    for i in range(p + 1):
        uh += sol.coefficients[e * p + i][:, None] * V[i][None, :]
    g = np.asarray(G.g(x), dtype=float) * np.ones_like(x)
    return float(mesh.h * np.sum((g * uh) @ w))


def stiffness_matrix(problem: ProblemSpec, y: Sequence[float], mesh: Mesh1D) -> np.ndarray:
    """Dense interior stiffness matrix, for checks on small meshes."""
    band = FemSolver(problem, mesh).assemble_band(np.asarray(y, dtype=float)[None, :])[0]
    n = band.shape[0]
    A = np.zeros((n, n))
    for i in range(n):
        for d in range(band.shape[1]):
            if i - d >= 0:
                A[i, i - d] = A[i - d, i] = band[i, d]
    return A


@dataclass
class ConvergenceReport:
    hs: list[float]
    errors: list[float]
    eoc: list[float]
    exact: bool


def convergence_order(problem: ProblemSpec, y: Sequence[float], degree: int,
                      hs: Sequence[float], noise_floor: float = 1e-15,
                      dtype=np.longdouble) -> ConvergenceReport:
    """Observed orders of G(u_h) against a reference on h_min / 8.

    Solves run in extended precision by default: in double precision the
    reference's roundoff (growing like h^-2) swamps fourth-order errors.
    """
    y = np.asarray(y, dtype=float)
    ref_mesh = Mesh1D.from_h(min(hs) / 8, degree)
    ref = FemSolver(problem, ref_mesh, dtype=dtype).functional_batch(y[None, :])[0]
    errors = []
    for h in hs:
        val = FemSolver(problem, Mesh1D.from_h(h, degree), dtype=dtype).functional_batch(y[None, :])[0]
        errors.append(float(abs(val - ref)))
    ref = float(ref)
    scale = max(abs(ref), 1.0)
    exact = all(e <= noise_floor * scale for e in errors)
    eoc = []
    for (h1, e1), (h2, e2) in zip(zip(hs, errors), zip(hs[1:], errors[1:])):
        if e1 <= noise_floor * scale or e2 <= noise_floor * scale:
            eoc.append(math.nan)
        else:
            eoc.append(math.log(e1 / e2) / math.log(h1 / h2))
    return ConvergenceReport(list(hs), errors, eoc, exact)
