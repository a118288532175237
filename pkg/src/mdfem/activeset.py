"""Active set of subsets kept by the decomposition method."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

from .problemspec import AdmissibilityError, product_weight_sum

IndexSet = tuple[int, ...]


@dataclass(frozen=True)
class ActiveSet:
    members: tuple[IndexSet, ...]
    weight_products: tuple[float, ...]  # gamma_u M_u, aligned with members
    threshold: float
    epsilon: float
    pstar: float
    M: float
    S_upper: float
    varsigma: float

    def __len__(self) -> int:
        return len(self.members)

    def __contains__(self, u) -> bool:
        return tuple(u) in set(self.members)

    def items(self):
        return zip(self.members, self.weight_products)


def _exponents(pstar: float, varsigma: float | None) -> tuple[float, float]:
    """(membership exponent, summation exponent) for q = 1."""
    if varsigma is None:
        return 1.0 - pstar, pstar
    if not 1.0 < varsigma <= 1.0 / pstar + 1e-12:
        raise AdmissibilityError(f"varsigma must lie in (1, 1/p*], got {varsigma}")
    return 1.0 - 1.0 / varsigma, 1.0 / varsigma


def build_active_set(weights, M: float, pstar: float, epsilon: float,
                     S: tuple[float, float] | float | None = None,
                     varsigma: float | None = None, tol: float = 1e-12,
                     max_members: int = 2_000_000) -> ActiveSet:
    """All u with (gamma_u M_u)^(1 - 1/varsigma) > (eps/2) / S, varsigma = 1/p* by default.

    Depth-first over indices in decreasing order of gamma_j M (ties by index);
    once a factor below one fails the test, every later index fails too.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    e_mem, e_sum = _exponents(pstar, varsigma)
    if S is None:
        S = product_weight_sum(weights, M, e_sum, tol)
    S_upper = S[1] if isinstance(S, tuple) else float(S)
    threshold = (epsilon / 2.0) / S_upper

    # products of factors >= 1 bound every partial product from above
    def passes(P: float) -> bool:
        return P > 0 and P ** e_mem > threshold

    # a member containing j satisfies gamma_j M * (product of factors >= 1) > cutoff
    cutoff = threshold ** (1.0 / e_mem)
    J_one = _candidate_range(weights, M, 1.0)
    big = math.prod(max(1.0, weights.gamma(j) * M) for j in range(1, J_one + 1))
    J = max(J_one, _candidate_range(weights, M, cutoff / big))
    factors = [(weights.gamma(j) * M, j) for j in range(1, J + 1)]
    factors = [fj for fj in factors if fj[0] > 0]
    factors.sort(key=lambda fj: (-fj[0], fj[1]))
    vals = [f for f, _ in factors]
    idx = [j for _, j in factors]

    found: list[tuple[IndexSet, float]] = []
    if passes(1.0):
        found.append(((), 1.0))

    # explicit stack instead of recursion: (start position, product, chosen indices)
    stack = [(0, 1.0, ())]
    while stack:
        start, P, chosen = stack.pop()
        for pos in range(start, len(vals)):
            w = vals[pos]
            newP = P * w
            ok = passes(newP)
            if ok or w >= 1.0:
                u = chosen + (idx[pos],)
                if ok:
                    found.append((tuple(sorted(u)), newP))
                    if len(found) > max_members:
                        raise AdmissibilityError("active set exceeds the member limit")
                stack.append((pos + 1, newP, u))
            else:
                break
    found.sort(key=lambda t: (len(t[0]), t[0]))
    return ActiveSet(tuple(u for u, _ in found), tuple(p for _, p in found), threshold,
                     epsilon, pstar, M, S_upper, varsigma if varsigma is not None else 1.0 / pstar)


def _candidate_range(weights, M: float, t: float) -> int:
    """Largest index that may need inspection: gamma_j M <= t for all later j."""
    support = weights.support
    if support is not None:
        return support
    if M <= 0:
        return 0
    J = weights.envelope_index(t / M)
    if J is None:
        raise AdmissibilityError("enumeration not guaranteed finite")
    return J


def active_set_bruteforce(weights, M: float, pstar: float, epsilon: float, J: int,
                          S_upper: float, varsigma: float | None = None) -> list[IndexSet]:
    """Reference: test every subset of {1..J}."""
    e_mem, _ = _exponents(pstar, varsigma)
    threshold = (epsilon / 2.0) / S_upper
    out = []
    for r in range(J + 1):
        for u in itertools.combinations(range(1, J + 1), r):
            P = weights.gamma_u(u) * M ** len(u)
            if P > 0 and P ** e_mem > threshold:
                out.append(u)
    out.sort(key=lambda u: (len(u), u))
    return out


@dataclass(frozen=True)
class ActiveSetDiagnostics:
    cardinality: int
    max_card: int
    in_set_mass: float
    truncation_mass: float  # sum over u outside the set of gamma_u M_u


def diagnostics(aset: ActiveSet, weights=None, tol: float = 1e-12) -> ActiveSetDiagnostics:
    """Cardinality, superposition dimension and the discarded weight mass.

    The discarded mass is S_1 - (in-set mass), with S_1 the product weight sum
    at exponent one; its upper interval end is used so the figure is a bound.
    """
    mass = math.fsum(aset.weight_products)
    trunc = math.nan
    if weights is not None:
        S1 = product_weight_sum(weights, aset.M, 1.0, tol)
        trunc = max(S1[1] - mass, 0.0)
    return ActiveSetDiagnostics(
        cardinality=len(aset),
        max_card=max((len(u) for u in aset.members), default=0),
        in_set_mass=mass,
        truncation_mass=trunc,
    )


def format_members(aset: ActiveSet) -> list[str]:
    return [f"{','.join(map(str, u)) or '{}'}\t{w:.6e}" for u, w in aset.items()]


def sort_members(members: Sequence[IndexSet]) -> list[IndexSet]:
    return sorted(members, key=lambda u: (len(u), u))
