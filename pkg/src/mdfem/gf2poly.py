"""Polynomials and truncated Laurent series over GF(2).

A polynomial is stored as the bits of a Python int: bit ``i`` is the
coefficient of ``x**i``.  Degrees are capped at 63 so every value fits one
machine word, which also lets the point generator vectorise over uint64.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

MAX_DEGREE = 63


class GF2Error(ValueError):
    pass


@dataclass(frozen=True, order=True)
class Poly2:
    """Polynomial over GF(2); ordering is lexicographic on the integer code."""

    bits: int = 0

    def __post_init__(self):
        if self.bits < 0:
            raise GF2Error("polynomial bit pattern must be non-negative")
        if self.bits.bit_length() - 1 > MAX_DEGREE:
            raise GF2Error(f"degree exceeds {MAX_DEGREE}")

    @classmethod
    def from_coeffs(cls, coeffs: Iterable[int]) -> "Poly2":
        bits = 0
        for i, c in enumerate(coeffs):
            if c & 1:
                bits |= 1 << i
        return cls(bits)

    @classmethod
    def from_int(cls, k: int) -> "Poly2":
        """k = k0 + k1*2 + ... maps to k0 + k1*x + ..."""
        return cls(k)

    def to_int(self) -> int:
        return self.bits

    @property
    def coeffs(self) -> tuple[int, ...]:
        return tuple((self.bits >> i) & 1 for i in range(max(self.bits.bit_length(), 1)))

    @property
    def degree(self) -> float | int:
        # -inf for the zero polynomial
        return self.bits.bit_length() - 1 if self.bits else float("-inf")

    def coeff(self, i: int) -> int:
        return (self.bits >> i) & 1

    def is_zero(self) -> bool:
        return self.bits == 0

    def __add__(self, other: "Poly2") -> "Poly2":
        return Poly2(self.bits ^ other.bits)

    __sub__ = __add__

    def __mul__(self, other: "Poly2") -> "Poly2":
        return mul(self, other)

    def __mod__(self, other: "Poly2") -> "Poly2":
        return Poly2(_mod_int(self.bits, other.bits))

    def __bool__(self) -> bool:
        return self.bits != 0

    def __repr__(self) -> str:
        if not self.bits:
            return "Poly2(0)"
        terms = []
        for i in range(self.bits.bit_length() - 1, -1, -1):
            if self.coeff(i):
                terms.append("1" if i == 0 else "x" if i == 1 else f"x^{i}")
        return "Poly2(" + "+".join(terms) + ")"

    def hex(self) -> str:
        return format(self.bits, "x")


ZERO = Poly2(0)
ONE = Poly2(1)
X = Poly2(2)


def clmul(a: int, b: int) -> int:
    """Carry-less product of two bit patterns."""
    if a.bit_length() < b.bit_length():
        a, b = b, a
    out = 0
    while b:
        if b & 1:
            out ^= a
        a <<= 1
        b >>= 1
    return out


def mul(a: Poly2, b: Poly2) -> Poly2:
    return Poly2(clmul(a.bits, b.bits))


def _mod_int(a: int, p: int) -> int:
    if p == 0:
        raise GF2Error("division by zero polynomial")
    dp = p.bit_length()
    while a.bit_length() >= dp:
        a ^= p << (a.bit_length() - dp)
    return a


def divmod_poly(a: Poly2, b: Poly2) -> tuple[Poly2, Poly2]:
    if b.bits == 0:
        raise GF2Error("division by zero polynomial")
    q = 0
    r = a.bits
    db = b.bits.bit_length()
    while r.bit_length() >= db:
        shift = r.bit_length() - db
        q |= 1 << shift
        r ^= b.bits << shift
    return Poly2(q), Poly2(r)


def mulmod(a: int, b: int, p: int) -> int:
    return _mod_int(clmul(a, b), p)


@dataclass(frozen=True)
class LaurentPrefix:
    """Digits w_1..w_n of a formal Laurent series (coefficients of x^-1..x^-n)."""

    digits: tuple[int, ...]

    @property
    def n(self) -> int:
        return len(self.digits)

    def value(self) -> float:
        return self.as_int() / float(1 << self.n) if self.n else 0.0

    def as_int(self) -> int:
        """Digits packed with w_1 as the most significant bit."""
        v = 0
        for w in self.digits:
            v = (v << 1) | w
        return v


def laurent_digits_int(num: int, den: int, n: int) -> int:
    """First ``n`` Laurent digits of num/den packed as an n-bit int (w_1 = MSB).

    ``num`` is reduced modulo ``den`` first, i.e. the polynomial part is dropped.
    """
    if den == 0:
        raise GF2Error("division by zero polynomial")
    r = _mod_int(num, den)
    dd = den.bit_length() - 1
    out = 0
    # long division: multiply remainder by x, the new digit is the coefficient
    # that overflows into degree dd
    for _ in range(n):
        r <<= 1
        bit = (r >> dd) & 1
        if bit:
            r ^= den
        out = (out << 1) | bit
    return out


def laurent_div(num: Poly2, den: Poly2, n: int) -> LaurentPrefix:
    """Truncated Laurent expansion of num/den, the map theta_n."""
    if den.is_zero():
        raise GF2Error("division by zero polynomial")
    if n < 0:
        raise GF2Error("truncation depth must be non-negative")
    v = laurent_digits_int(num.bits, den.bits, n)
    return LaurentPrefix(tuple((v >> (n - 1 - i)) & 1 for i in range(n)))


def is_irreducible(p: Poly2) -> bool:
    """Exhaustive trial division by every polynomial of degree 1..deg/2."""
    d = p.degree
    if d < 1:
        return False
    if d == 1:
        return True
    if p.bits & 1 == 0:
        return False
    for cand in range(2, 1 << (d // 2 + 1)):
        if _mod_int(p.bits, cand) == 0:
            return False
    return True


def _is_irreducible_rabin(bits: int) -> bool:
    # Rabin's test: x^(2^n) = x mod p and gcd(x^(2^(n/r)) - x, p) = 1 for prime r | n.
    n = bits.bit_length() - 1
    if n < 1:
        return False
    if n == 1:
        return True
    if not bits & 1:
        return False

    def x_pow_2k(k: int) -> int:
        t = 2
        for _ in range(k):
            t = mulmod(t, t, bits)
        return t

    if x_pow_2k(n) != _mod_int(2, bits):
        return False
    for r in _prime_factors(n):
        g = _gcd(x_pow_2k(n // r) ^ 2, bits)
        if g != 1:
            return False
    return True


def _gcd(a: int, b: int) -> int:
    while b:
        a, b = b, _mod_int(a, b)
    return a


def _prime_factors(n: int) -> list[int]:
    out = []
    d = 2
    while d * d <= n:
        if n % d == 0:
            out.append(d)
            while n % d == 0:
                n //= d
        d += 1
    if n > 1:
        out.append(n)
    return out


@lru_cache(maxsize=None)
def irreducible_of_degree(n: int) -> Poly2:
    """Lexicographically smallest irreducible polynomial of degree n.

    Trial division is exhaustive up to degree 24; above that the candidate
    is confirmed with Rabin's deterministic test (trial division by 2^32
    divisors is not practical).
    """
    if not 1 <= n <= MAX_DEGREE:
        raise GF2Error(f"degree must lie in [1, {MAX_DEGREE}], got {n}")
    if n == 1:
        return X
    for low in range(1, 1 << n, 2):
        bits = (1 << n) | low
        if n <= 24:
            if is_irreducible(Poly2(bits)):
                return Poly2(bits)
        elif _is_irreducible_rabin(bits):
            return Poly2(bits)
    raise GF2Error(f"no irreducible polynomial of degree {n}")  # pragma: no cover


def primitive_element(p: Poly2) -> int:
    """Smallest generator of the multiplicative group of GF(2)[x]/p."""
    n = p.degree
    order = (1 << n) - 1
    if order == 1:
        return 1
    factors = _prime_factors(order)
    for g in range(2, 1 << n):
        if all(_powmod(g, order // r, p.bits) != 1 for r in factors):
            return g
    raise GF2Error("modulus is not irreducible")  # pragma: no cover


def _powmod(a: int, e: int, p: int) -> int:
    out = 1
    a = _mod_int(a, p)
    while e:
        if e & 1:
            out = mulmod(out, a, p)
        a = mulmod(a, a, p)
        e >>= 1
    return out


def powmod(a: Poly2, e: int, p: Poly2) -> Poly2:
    return Poly2(_powmod(a.bits, e, p.bits))


def from_hex(s: str) -> Poly2:
    return Poly2(int(s, 16))


def polys_from_ints(ks: Sequence[int]) -> list[Poly2]:
    return [Poly2(k) for k in ks]
