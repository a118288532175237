"""Cost-optimal planning and execution of the decomposition estimator.

The planner solves the Lagrange system for per-subset mesh widths h_u and
point counts k_u in closed form, then rounds: n_u up to a power of two and
h_u down to a dyadic mesh.
"""

from __future__ import annotations

import hashlib
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .activeset import ActiveSet, build_active_set
from .anchored import SubsetSolveCache, decomposed_values
from .fem1d import FemSolver, Mesh1D, nesting_mesh
from .polylattice import (DigitalShift, VectorCache, _modulus_for, generate_points,
                          search_generating_vector)
from .problemspec import (AdmissibilityError, CubatureConstants, ProblemSpec, RateParams,
                          cubature_constants, weight_model_M)


class PlanError(ValueError):
    pass


def pounds(card: int) -> float:
    """Cost weight 2^|u| |u| of one decomposed evaluation; the empty set costs one solve."""
    return 1.0 if card == 0 else float(2 ** card * card)


@dataclass(frozen=True)
class SubsetPlan:
    u: tuple[int, ...]
    gamma_u: float
    C_u: float
    pounds_u: float
    k_u: float
    n_u: int
    h_planner: float
    mesh: Mesh1D

    @property
    def m(self) -> int:
        return self.n_u.bit_length() - 1

    @property
    def h(self) -> float:
        return self.mesh.h


@dataclass(frozen=True)
class ParameterPlan:
    records: tuple[SubsetPlan, ...]
    A: float
    B: float
    A_tilde: float
    B_tilde: float
    xi: float
    norm_sum: float
    epsilon: float
    rates: RateParams
    fem_constant: float
    degree: int

    def constraint_residual(self) -> float:
        """Relative residual of the pre-rounding constraint sum = eps/2."""
        lam, tau = self.rates.lam, self.rates.tau
        total = math.fsum(r.gamma_u * r.C_u / r.k_u ** lam
                          + self.fem_constant * 2.0 ** len(r.u) * r.h_planner ** tau
                          for r in self.records)
        return abs(total - self.epsilon / 2) / (self.epsilon / 2)

    @property
    def predicted_error2(self) -> float:
        lam, tau = self.rates.lam, self.rates.tau
        return math.fsum(r.gamma_u * r.C_u / r.n_u ** lam
                         + self.fem_constant * 2.0 ** len(r.u) * r.h ** tau
                         for r in self.records)

    @property
    def predicted_cost(self) -> float:
        return math.fsum(r.n_u / r.h * r.pounds_u for r in self.records)

    @property
    def planner_cost(self) -> float:
        return math.fsum(r.k_u / r.h_planner * r.pounds_u for r in self.records)


def _next_pow2(k: float) -> int:
    if k <= 1:
        return 1
    return 1 << math.ceil(math.log2(k) - 1e-12)


def make_plan(aset: ActiveSet, rates: RateParams, consts: CubatureConstants, weights,
              epsilon: float | None = None, fem_constant: float = 1.0,
              degree: int | None = None) -> ParameterPlan:
    """Closed-form Lagrange solution for (h_u, k_u), then rounding."""
    if len(aset) == 0:
        raise PlanError("active set is empty")
    eps = aset.epsilon if epsilon is None else epsilon
    d, lam, tau = rates.d, rates.lam, rates.tau
    E = lam * (tau + d) + tau
    A = (d ** (lam + 1) * lam / tau ** (lam + 1)) ** (1 / E)
    B = (d ** d * lam ** (tau + d) / tau ** d) ** (1 / E)
    ABsum = A ** tau + B ** -lam
    A_t = 2 ** (-1 / tau) * A * ABsum ** (-1 / tau)
    B_t = 2 ** (1 / lam) * B * ABsum ** (1 / lam)
    rows = []
    for u in aset.members:
        c = len(u)
        rows.append((u, weights.gamma_u(u), consts.C_u(c), pounds(c)))
    terms = [(g ** tau * C ** tau * 2 ** (lam * d * len(u)) * L ** (lam * tau)) ** (1 / E)
             for u, g, C, L in rows]
    norm = math.fsum(terms)
    if not math.isfinite(norm) or norm <= 0:
        raise PlanError("normalisation sum is not finite")
    xi = (2 / eps * ABsum * norm) ** (E / (lam * tau))
    if degree is None:
        degree = max(1, min(3, math.ceil(tau / 2)))
    # a fem constant C scales h by C^(-1/tau); the optimum in C^(1/tau) h is unchanged
    hscale = fem_constant ** (-1 / tau)
    records = []
    for u, g, C, L in rows:
        c = len(u)
        h = A_t * eps ** (1 / tau) * (g * C * L ** lam / 2 ** ((lam + 1) * c)) ** (1 / E) * norm ** (-1 / tau)
        k = B_t * eps ** (-1 / lam) * (g ** (tau + d) * C ** (tau + d) / (2 ** (c * d) * L ** tau)) ** (1 / E) * norm ** (1 / lam)
        h *= hscale
        records.append(SubsetPlan(u, g, C, L, k, _next_pow2(k), h, nesting_mesh(min(h, 0.5), degree)))
    return ParameterPlan(tuple(records), A, B, A_t, B_t, xi, norm, eps, rates, fem_constant, degree)


def make_plan_mdm(aset: ActiveSet, lam: float, consts_u, costs_u, weights, lam1: float = 0.0,
                  q: float = 1.0) -> list[tuple[tuple[int, ...], float]]:
    """Point counts for the plain decomposition method with cost weights costs_u(u).

    k_u = (2/eps)^(1/lam) (sum_v L_v^(q lam/(q lam+1)) (g_v C_v |v|^(lam1|v|))^(q/(q lam+1)))^(1/(q lam))
          * (g_u^q C_u^q |u|^(q lam1 |u|) / L_u)^(1/(q lam+1))
    """
    eps = aset.epsilon
    def logfac(u):
        c = len(u)
        return float(c) ** (lam1 * c) if c else 1.0
    parts = [(u, weights.gamma_u(u), consts_u(len(u)), costs_u(u), logfac(u)) for u in aset.members]
    S = math.fsum(L ** (q * lam / (q * lam + 1)) * (g * C * lf) ** (q / (q * lam + 1)) for u, g, C, L, lf in parts)
    out = []
    for u, g, C, L, lf in parts:
        k = (2 / eps) ** (1 / lam) * S ** (1 / (q * lam)) * (g ** q * C ** q * lf ** q / L) ** (1 / (q * lam + 1))
        out.append((u, k))
    return out


def mdm_error_inflation(n_u: dict, lam1: float) -> float:
    """max(1, max_u (ln n_u / |u|)^(lam1 |u|)) from the log-factor cubature rate."""
    worst = 1.0
    for u, n in n_u.items():
        c = len(u)
        if c and n > 1:
            worst = max(worst, (math.log(n) / c) ** (lam1 * c))
    return worst


def plan_for_epsilon(problem: ProblemSpec, epsilon: float, rates: RateParams | None = None,
                     fem_constant: float = 1.0, degree: int | None = None
                     ) -> tuple[ActiveSet, ParameterPlan]:
    """Active set with M = M(alpha) followed by make_plan."""
    rates = rates or problem.rates()
    weights = problem.model.weights()
    aset = build_active_set(weights, weight_model_M(rates.alpha), rates.pstar, epsilon)
    plan = make_plan(aset, rates, cubature_constants(rates), weights, epsilon,
                     fem_constant=fem_constant, degree=degree)
    return aset, plan


# ---------------------------------------------------------------------------
# execution


def subset_id(u: Sequence[int]) -> int:
    """Stable 63-bit id used to key shift randomness."""
    h = hashlib.sha256(",".join(map(str, u)).encode()).digest()
    return int.from_bytes(h[:8], "little") >> 1


@dataclass
class RuleSource:
    """Supplies generating vectors; caches them in memory and optionally on disk."""

    strategy: str = "cbc"
    cache: VectorCache | None = None
    candidates: int = 64
    seed: int = 0
    allow_search: bool = True

    def __post_init__(self):
        if self.cache is None:
            self.cache = VectorCache(None)

    def rule(self, m: int, weights: Sequence[float], alpha: int):
        if not self.allow_search:
            n, _ = _modulus_for(m, alpha)
            hit = self.cache.load(alpha, m, n, len(weights), [float(w) for w in weights], self.strategy)
            if hit is None:
                raise PlanError("missing generating vector and search disabled")
            return hit
        return search_generating_vector(m, len(weights), weights, alpha, self.strategy,
                                        candidates=self.candidates, seed=self.seed, cache=self.cache)


@dataclass
class SubsetResult:
    u: tuple[int, ...]
    value: float
    variance: float = 0.0  # variance of the shift-averaged estimate
    solves: int = 0


@dataclass
class MdfemResult:
    value: float
    epsilon: float
    cost_units: float
    wall_time: float
    contributions: list[SubsetResult]
    mode: str
    shift_count: int = 0
    seed: int = 0
    stderr: float = 0.0

    @property
    def solve_count(self) -> int:
        return sum(c.solves for c in self.contributions)


def _ordered_sum(values: Sequence[float]) -> float:
    total = 0.0
    for v in values:
        total += v
    return total


def _run_units(fn, records, threads: int):
    if threads <= 1:
        return [fn(r) for r in records]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, records))


def _empty_value(problem: ProblemSpec, mesh: Mesh1D) -> float:
    return float(FemSolver(problem, mesh).functional_subset((), np.zeros((1, 0)))[0])


def run_deterministic(plan: ParameterPlan, problem: ProblemSpec, rules: RuleSource | None = None,
                      threads: int = 1) -> MdfemResult:
    """Higher-order lattice rules (modulus degree alpha m) for every subset."""
    if plan.rates.mode != "deterministic":
        raise AdmissibilityError("deterministic execution needs lambda >= 1")
    rules = rules or RuleSource()
    alpha = plan.rates.alpha
    weights = problem.model.weights()
    t0 = time.perf_counter()

    def unit(rec: SubsetPlan) -> SubsetResult:
        if not rec.u:
            return SubsetResult((), _empty_value(problem, rec.mesh), 0.0, 1)
        rule = rules.rule(rec.m, [weights.gamma(j) for j in rec.u], alpha)
        pts = generate_points(rule).points
        cache = SubsetSolveCache()
        vals = decomposed_values(rec.u, pts, FemSolver(problem, rec.mesh), cache)
        return SubsetResult(rec.u, float(np.mean(vals)), 0.0, cache.misses)

    parts = _run_units(unit, plan.records, threads)
    return MdfemResult(_ordered_sum([p.value for p in parts]), plan.epsilon, plan.predicted_cost,
                       time.perf_counter() - t0, parts, "deterministic")


def run_randomized(plan: ParameterPlan, problem: ProblemSpec, rules: RuleSource | None = None,
                   shifts: int = 8, seed: int = 0, threads: int = 1) -> MdfemResult:
    """Randomly shifted first-order rules, `shifts` independent shifts per subset.

    Shift r of subset u is drawn from the stream keyed by (seed, id(u), r), so
    the result does not depend on the thread schedule.
    """
    if plan.rates.mode != "randomized":
        raise AdmissibilityError("randomized execution needs 1/2 <= lambda < 1")
    if shifts < 2:
        raise ValueError("need at least two shifts for a standard error")
    rules = rules or RuleSource()
    weights = problem.model.weights()
    t0 = time.perf_counter()

    def unit(rec: SubsetPlan) -> SubsetResult:
        if not rec.u:
            return SubsetResult((), _empty_value(problem, rec.mesh), 0.0, 1)
        rule = rules.rule(rec.m, [weights.gamma(j) for j in rec.u], 1)
        sid = subset_id(rec.u)
        ests = []
        cache = SubsetSolveCache()
        solver = FemSolver(problem, rec.mesh)
        for r in range(shifts):
            shift = DigitalShift.from_key(seed, sid, r, s=len(rec.u))
            pts = generate_points(rule, shift).points
            ests.append(float(np.mean(decomposed_values(rec.u, pts, solver, cache))))
        ests = np.asarray(ests)
        return SubsetResult(rec.u, float(ests.mean()), float(ests.var(ddof=1) / shifts), cache.misses)

    parts = _run_units(unit, plan.records, threads)
    stderr = math.sqrt(_ordered_sum([p.variance for p in parts]))
    return MdfemResult(_ordered_sum([p.value for p in parts]), plan.epsilon, plan.predicted_cost,
                       time.perf_counter() - t0, parts, "randomized", shifts, seed, stderr)


@dataclass
class BaselineResult:
    value: float
    cost_units: float
    s: int
    N: int
    h: float
    stderr: float = 0.0
    wall_time: float = 0.0


def single_level_baseline(problem: ProblemSpec, s: int, N: int, h: float, degree: int = 1,
                          alpha: int = 1, shifts: int = 0, seed: int = 0,
                          rules: RuleSource | None = None) -> BaselineResult:
    """Truncate to s parameters; one s-dimensional lattice rule, one mesh.

    cost_units = N h^-1 max(s, 1).  With shifts > 0 the rule is randomly shifted
    and averaged over that many shifts (alpha must be 1).
    """
    if N < 1 or N & (N - 1):
        raise ValueError("N must be a power of two")
    rules = rules or RuleSource()
    t0 = time.perf_counter()
    mesh = nesting_mesh(h, degree)
    solver = FemSolver(problem, mesh)
    weights = problem.model.weights()
    cost = N / mesh.h * max(s, 1)
    if s == 0:
        val = float(solver.functional_subset((), np.zeros((1, 0)))[0])
        return BaselineResult(val, cost, 0, N, mesh.h, 0.0, time.perf_counter() - t0)
    m = N.bit_length() - 1
    rule = rules.rule(m, [weights.gamma(j) for j in range(1, s + 1)], alpha)
    v = tuple(range(1, s + 1))
    if shifts:
        if alpha != 1:
            raise ValueError("random shifts are used with first-order rules only")
        ests = []
        for r in range(shifts):
            pts = generate_points(rule, DigitalShift.from_key(seed, 0, r, s=s)).points
            ests.append(float(np.mean(solver.functional_subset(v, pts))))
        ests = np.asarray(ests)
        return BaselineResult(float(ests.mean()), cost, s, N, mesh.h,
                              float(ests.std(ddof=1) / math.sqrt(shifts)) if shifts > 1 else 0.0,
                              time.perf_counter() - t0)
    pts = generate_points(rule).points
    val = float(np.mean(solver.functional_subset(v, pts)))
    return BaselineResult(val, cost, s, N, mesh.h, 0.0, time.perf_counter() - t0)


def baseline_parameters(model, epsilon: float, tau: float, pstar: float) -> tuple[int, int, float]:
    """A priori (s, N, h) for the single-level method at target epsilon.

    Balances N^(-1/p*), h^tau and (sup_{j>s} b_j)^2 against epsilon with unit
    constants; N is rounded up to a power of two.
    """
    s = model.weights().envelope_index(math.sqrt(epsilon))
    if s is None:
        raise PlanError("truncation dimension not available for this family")
    if model.size is not None:
        s = min(s, model.size)
    N = _next_pow2(epsilon ** -pstar)
    h = min(epsilon ** (1.0 / tau), 0.5)
    return s, N, h
