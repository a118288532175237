"""Polynomial lattice point sets over GF(2), digital shifts and vector search.

Points are produced from a generator matrix: the Laurent digits of
k(x) q(x) / p(x) are linear in the bits of k, so each coordinate is the XOR of
precomputed columns.  Coordinates are carried as 53-bit integers (one double
mantissa) until the final conversion to floats.
"""

from __future__ import annotations

import hashlib
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .gf2poly import (
    GF2Error,
    Poly2,
    irreducible_of_degree,
    laurent_digits_int,
    laurent_div,
    mulmod,
    primitive_element,
)

log = logging.getLogger(__name__)

PRECISION = 53
FAST_CBC_MAX_DEGREE = 22
_TIE_RTOL = 1e-10


class LatticeError(ValueError):
    pass


@dataclass(frozen=True)
class PolyLatticeRule:
    m: int
    n: int
    modulus: Poly2
    gen: tuple[Poly2, ...]

    def __post_init__(self):
        if self.m < 0 or self.n < self.m:
            raise LatticeError(f"need 0 <= m <= n, got m={self.m}, n={self.n}")
        if self.modulus.degree != self.n:
            raise LatticeError("modulus degree must equal n")
        for q in self.gen:
            if q.is_zero() or q.degree >= self.n:
                raise LatticeError(f"generator {q!r} must be nonzero with degree < {self.n}")

    @property
    def s(self) -> int:
        return len(self.gen)

    @property
    def num_points(self) -> int:
        return 1 << self.m


@dataclass(frozen=True)
class DigitalShift:
    digits: np.ndarray  # uint64, one PRECISION-bit integer per dimension
    seed: int = 0
    n_bits: int = PRECISION

    @classmethod
    def from_key(cls, seed: int, *key: int, s: int) -> "DigitalShift":
        """Derive shift digits from (seed, key...) independently of call order."""
        ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *[int(k) for k in key]])
        rng = np.random.Generator(np.random.PCG64(ss))
        digits = rng.integers(0, 1 << PRECISION, size=s, dtype=np.uint64)
        return cls(digits=digits, seed=seed)

    @classmethod
    def zero(cls, s: int) -> "DigitalShift":
        return cls(digits=np.zeros(s, dtype=np.uint64))


@dataclass
class CubatureNodeSet:
    points: np.ndarray
    weights: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.weights is None:
            n = self.points.shape[0]
            self.weights = np.full(n, 1.0 / n)

    def integrate(self, values: np.ndarray) -> float:
        return float(np.dot(self.weights, values))


def _column_ints(q: Poly2, p: Poly2, m: int, n: int) -> list[int]:
    """Digits of x^i q / p for i < m, aligned to PRECISION bits."""
    cols = []
    for i in range(m):
        v = laurent_digits_int(mulmod(1 << i, q.bits, p.bits), p.bits, n)
        cols.append(_align(v, n))
    return cols


def _align(v: int, n: int) -> int:
    return v << (PRECISION - n) if n <= PRECISION else v >> (n - PRECISION)


def _span(cols: Sequence[int]) -> np.ndarray:
    """All XOR combinations of cols, indexed by the integer k whose bits select them."""
    out = np.zeros(1, dtype=np.uint64)
    for c in cols:
        out = np.concatenate([out, out ^ np.uint64(c)])
    return out


def point_ints(rule: PolyLatticeRule) -> np.ndarray:
    """Unshifted coordinates as PRECISION-bit integers, shape (2^m, s)."""
    N = rule.num_points
    out = np.empty((N, rule.s), dtype=np.uint64)
    for j, q in enumerate(rule.gen):
        out[:, j] = _span(_column_ints(q, rule.modulus, rule.m, rule.n))
    return out


def generate_points(rule: PolyLatticeRule, shift: DigitalShift | None = None,
                    translate: bool = True) -> CubatureNodeSet:
    ints = point_ints(rule)
    if shift is not None:
        if len(shift.digits) != rule.s:
            raise LatticeError("shift dimension does not match rule")
        ints ^= shift.digits[None, :]
    pts = ints.astype(np.float64) * (2.0 ** -PRECISION)
    if translate:
        pts -= 0.5
    return CubatureNodeSet(points=pts)


def generate_points_direct(rule: PolyLatticeRule) -> np.ndarray:
    """Reference route: one Laurent division per point and coordinate, in [0, 1)."""
    N = rule.num_points
    out = np.empty((N, rule.s))
    p = rule.modulus
    for k in range(N):
        for j, q in enumerate(rule.gen):
            num = Poly2(mulmod(k, q.bits, p.bits))
            out[k, j] = laurent_div(num, p, rule.n).value()
    return out


# ---------------------------------------------------------------------------
# quality criterion


def omega(alpha: int, x_ints: np.ndarray, n: int) -> np.ndarray:
    """Walsh-series kernel term for coordinates given as PRECISION-bit integers.

    alpha = 1: sum over k >= 1 of 2^(-2 mu_1(k)) wal_k(x), in closed form.
    alpha >= 2: sum over 1 <= k < 2^n of 2^(-mu_alpha(k)) wal_k(x), where
    mu_alpha(k) adds the alpha highest bit positions of k.
    """
    x = np.asarray(x_ints, dtype=np.uint64)
    if alpha == 1:
        # position of the leading one digit, 1-based; 0 means x == 0
        i0 = PRECISION - _bit_index(x)
        return np.where(x != 0, 0.5 - 3.0 * np.exp2(-i0 - 1.0), 0.5)
    nd = min(n, PRECISION)
    S = np.zeros((alpha + 1,) + x.shape)
    S[0] = 1.0
    for a in range(nd, 0, -1):
        bit = ((x >> np.uint64(PRECISION - a)) & np.uint64(1)).astype(np.float64)
        sign = 1.0 - 2.0 * bit
        newS = S.copy()
        w = 2.0 ** -a
        for c in range(alpha):
            newS[c + 1] += S[c] * sign * w
        newS[alpha] += S[alpha] * sign
        S = newS
    return S[1:].sum(axis=0)


def _bit_index(x: np.ndarray) -> np.ndarray:
    """floor(log2 x) for uint64 x < 2^53, exact; -1 where x == 0."""
    hi = (x >> np.uint64(21)).astype(np.float64)
    lo = (x & np.uint64((1 << 21) - 1)).astype(np.float64)
    out = np.full(x.shape, -1.0)
    with np.errstate(divide="ignore"):
        out = np.where(hi > 0, np.floor(np.log2(np.maximum(hi, 1.0))) + 21.0,
                       np.where(lo > 0, np.floor(np.log2(np.maximum(lo, 1.0))), -1.0))
    return out


def _criterion_from_ints(ints: np.ndarray, weights: Sequence[float], alpha: int, n: int) -> float:
    prod = np.ones(ints.shape[0])
    for j in range(ints.shape[1]):
        prod *= 1.0 + weights[j] * omega(alpha, ints[:, j], n)
    return float(prod.mean() - 1.0)


def quality_criterion(rule: PolyLatticeRule, weights: Sequence[float], alpha: int) -> float:
    """Shift-invariant figure of merit; smaller is better.

    Equals the weighted sum of the Walsh decay factors over the nonzero
    dual-net vectors (squared first-order factors for alpha = 1).
    """
    if len(weights) < rule.s:
        raise LatticeError("need one weight per dimension")
    val = _criterion_from_ints(point_ints(rule), weights, alpha, rule.n)
    # exact value is a nonnegative sum; clip roundoff
    return max(val, 0.0)


# ---------------------------------------------------------------------------
# generating-vector search


def _modulus_for(m: int, alpha: int) -> tuple[int, Poly2]:
    n = m if alpha == 1 else alpha * m
    if n < 1 or n > 63:
        raise LatticeError(f"unsatisfiable modulus degree n={n} for m={m}, alpha={alpha}")
    return n, irreducible_of_degree(n)


def _vec_mulmod_const(a: np.ndarray, c: int, p: int) -> np.ndarray:
    """Elementwise a * c mod p for uint64 arrays with deg(a), deg(c) < deg(p) <= 32."""
    n = p.bit_length() - 1
    prod = np.zeros_like(a)
    for i in range(c.bit_length()):
        if (c >> i) & 1:
            prod ^= a << np.uint64(i)
    for d in range(2 * n - 2, n - 1, -1):
        hit = (prod >> np.uint64(d)) & np.uint64(1)
        prod ^= hit * np.uint64(p << (d - n))
    return prod


class _FieldTables:
    """Powers of a primitive element and the kernel table for one (alpha, n)."""

    def __init__(self, p: Poly2, alpha: int):
        n = p.degree
        self.n = n
        self.L = (1 << n) - 1
        g = primitive_element(p)
        block = min(1024, self.L)
        first = [1]
        for _ in range(block - 1):
            first.append(mulmod(first[-1], g, p.bits))
        gb = mulmod(first[-1], g, p.bits)
        pw = [np.array(first, dtype=np.uint64)]
        total = block
        cur = pw[0]
        while total < self.L:
            cur = _vec_mulmod_const(cur, gb, p.bits)
            pw.append(cur)
            total += block
        self.powers = np.concatenate(pw)[: self.L]
        self.log = np.zeros(1 << n, dtype=np.int64)
        self.log[self.powers.astype(np.int64)] = np.arange(self.L)
        cols = [_align(laurent_digits_int(1 << i, p.bits, n), n) for i in range(n)]
        digits = _span(cols)  # digits of r/p indexed by r
        self.omega = omega(alpha, digits, n)  # indexed by field element r
        self.omega_pow = self.omega[self.powers.astype(np.int64)]
        self._fft_w = np.fft.rfft(self.omega_pow)


_TABLES: dict[tuple[int, int], _FieldTables] = {}


def _tables(p: Poly2, alpha: int) -> _FieldTables:
    key = (p.bits, alpha)
    if key not in _TABLES:
        _TABLES[key] = _FieldTables(p, alpha)
    return _TABLES[key]


def _pick(costs: np.ndarray, cands: np.ndarray) -> int:
    """Index of the minimum cost; near-ties resolved by the smallest candidate."""
    cmin = costs.min()
    tol = _TIE_RTOL * max(abs(cmin), 1e-300) + 1e-300
    near = np.flatnonzero(costs <= cmin + tol)
    return int(near[np.argmin(cands[near])])


def _cbc_fast(m: int, n: int, p: Poly2, weights: Sequence[float], alpha: int) -> list[int]:
    T = _tables(p, alpha)
    N = 1 << m
    ks = np.arange(1, N)
    logk = T.log[ks]
    prod = np.ones(N)
    chosen = []
    cand_all = T.powers.astype(np.int64)  # candidate q = g^a at index a
    for gamma in weights:
        if gamma == 0.0:
            q = 1
        else:
            P = np.zeros(T.L)
            np.add.at(P, logk, prod[1:])
            # c[a] = sum_b P[b] W[(a+b) mod L]
            c = np.fft.irfft(np.conj(np.fft.rfft(P)) * T._fft_w, n=T.L)
            cmin = c.min()
            spread = max(np.abs(c).max(), 1e-300)
            near = np.flatnonzero(c <= cmin + 1e-9 * spread)
            if len(near) > 256:
                near = near[np.argsort(c[near], kind="stable")[:256]]
            # exact re-evaluation of the short list removes FFT roundoff
            exact = np.array([np.dot(prod[1:], T.omega[_vec_mulmod_const(ks.astype(np.uint64), int(cand_all[a]), p.bits).astype(np.int64)])
                              for a in near])
            q = int(cand_all[near[_pick(exact, cand_all[near])]])
        chosen.append(q)
        kq = _vec_mulmod_const(np.arange(N, dtype=np.uint64), q, p.bits).astype(np.int64)
        prod *= 1.0 + gamma * T.omega[kq]
    return chosen


def _cbc_direct(m: int, n: int, p: Poly2, weights: Sequence[float], alpha: int) -> list[int]:
    """Exhaustive CBC: evaluate every nonzero q of degree < n per component."""
    N = 1 << m
    prod = np.ones(N)
    chosen = []
    cands = np.arange(1, 1 << n)
    for gamma in weights:
        costs = np.empty(len(cands))
        for i, q in enumerate(cands):
            x = _span(_column_ints(Poly2(int(q)), p, m, n))
            costs[i] = np.dot(prod, 1.0 + gamma * omega(alpha, x, n))
        q = int(cands[_pick(costs, cands)])
        chosen.append(q)
        prod *= 1.0 + gamma * omega(alpha, _span(_column_ints(Poly2(q), p, m, n)), n)
    return chosen


def _random_search(m, n, p, weights, alpha, R, seed) -> list[int]:
    s = len(weights)
    total = (1 << n) - 1
    if total ** s <= R:
        grids = np.meshgrid(*[np.arange(1, total + 1)] * s, indexing="ij")
        vecs = np.stack([g.ravel() for g in grids], axis=1)
    else:
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, m, n, s, alpha])))
        vecs = rng.integers(1, total + 1, size=(R, s))
    best, best_cost = None, np.inf
    for v in vecs:
        rule = PolyLatticeRule(m, n, p, tuple(Poly2(int(q)) for q in v))
        c = _criterion_from_ints(point_ints(rule), weights, alpha, n)
        tv = tuple(int(q) for q in v)
        if best is None or c < best_cost - _TIE_RTOL * abs(best_cost) or (
                abs(c - best_cost) <= _TIE_RTOL * abs(best_cost) and tv < best):
            best, best_cost = tv, c
    return list(best)


def search_generating_vector(m: int, s: int, weights: Sequence[float], alpha: int = 1,
                             strategy: str = "cbc", n: int | None = None,
                             candidates: int = 64, seed: int = 0,
                             cache: "VectorCache | None" = None) -> PolyLatticeRule:
    """Pick a generating vector for a 2^m-point rule in s dimensions.

    strategy is ``cbc`` (component by component, exhaustive over candidates),
    ``random`` (best of ``candidates`` random vectors) or ``fixed`` (q_j = 1).
    """
    n_req, p = _modulus_for(m, alpha)
    if n is not None and n != n_req:
        raise LatticeError(f"modulus degree {n} incompatible with m={m}, alpha={alpha}")
    n = n_req
    weights = [float(w) for w in weights][:s]
    if len(weights) < s:
        raise LatticeError("need one weight per dimension")
    if s == 0:
        return PolyLatticeRule(m, n, p, ())
    if cache is not None:
        hit = cache.load(alpha, m, n, s, weights, strategy)
        if hit is not None:
            return hit
    if strategy == "fixed":
        q = [1] * s
    elif strategy == "random":
        q = _random_search(m, n, p, weights, alpha, candidates, seed)
    elif strategy == "cbc":
        if n <= FAST_CBC_MAX_DEGREE:
            q = _cbc_fast(m, n, p, weights, alpha)
        else:
            log.warning("modulus degree %d too large for exhaustive CBC; using random search", n)
            q = _random_search(m, n, p, weights, alpha, candidates, seed)
    else:
        raise LatticeError(f"unknown strategy {strategy!r}")
    rule = PolyLatticeRule(m, n, p, tuple(Poly2(v) for v in q))
    if cache is not None:
        cache.store(rule, alpha, weights, strategy)
    return rule


# ---------------------------------------------------------------------------
# on-disk cache


def weight_fingerprint(weights: Sequence[float], strategy: str = "cbc") -> str:
    h = hashlib.sha256()
    h.update(strategy.encode())
    for w in weights:
        h.update(np.float64(w).tobytes())
    return h.hexdigest()[:16]


class VectorCache:
    """Directory of generating vectors, one small text file per key."""

    def __init__(self, path: str | os.PathLike | None = None):
        env = os.environ.get("MDFEM_CACHE")
        if env:
            path = env
        self.path = Path(path) if path is not None else None
        self._mem: dict[str, PolyLatticeRule] = {}

    def _name(self, alpha, m, n, s, weights, strategy) -> str:
        return f"plr_a{alpha}_m{m}_n{n}_s{s}_{weight_fingerprint(weights, strategy)}.txt"

    def load(self, alpha, m, n, s, weights, strategy="cbc") -> PolyLatticeRule | None:
        name = self._name(alpha, m, n, s, weights, strategy)
        if name in self._mem:
            return self._mem[name]
        if self.path is None:
            return None
        f = self.path / name
        if not f.exists():
            return None
        try:
            rule = parse_rule(f.read_text(), m)
        except (LatticeError, GF2Error, ValueError) as exc:
            log.warning("ignoring unreadable cache entry %s: %s", f, exc)
            return None
        self._mem[name] = rule
        return rule

    def store(self, rule: PolyLatticeRule, alpha, weights, strategy="cbc") -> None:
        name = self._name(alpha, rule.m, rule.n, rule.s, weights, strategy)
        self._mem[name] = rule
        if self.path is None:
            return
        self.path.mkdir(parents=True, exist_ok=True)
        tmp = self.path / (name + f".{os.getpid()}.tmp")
        tmp.write_text(format_rule(rule, alpha))
        os.replace(tmp, self.path / name)


def format_rule(rule: PolyLatticeRule, alpha: int) -> str:
    lines = [f"plr v1 alpha={alpha} m={rule.m} n={rule.n} s={rule.s} modulus={rule.modulus.hex()}"]
    lines += [f"q{j}={q.hex()}" for j, q in enumerate(rule.gen, start=1)]
    return "\n".join(lines) + "\n"


def parse_rule(text: str, m: int | None = None) -> PolyLatticeRule:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("plr v1 "):
        raise LatticeError("missing 'plr v1' header")
    head = dict(tok.split("=", 1) for tok in lines[0].split()[2:])
    s = int(head["s"])
    gen = []
    for j, ln in enumerate(lines[1:], start=1):
        key, val = ln.split("=", 1)
        if key != f"q{j}":
            raise LatticeError(f"expected q{j}, got {key}")
        gen.append(Poly2(int(val, 16)))
    if len(gen) != s:
        raise LatticeError(f"header says s={s} but found {len(gen)} components")
    rule_m = int(head["m"])
    if m is not None and m != rule_m:
        raise LatticeError("cached rule has a different m")
    return PolyLatticeRule(rule_m, int(head["n"]), Poly2(int(head["modulus"], 16)), tuple(gen))
