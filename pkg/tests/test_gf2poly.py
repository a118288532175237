from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from mdfem.gf2poly import (GF2Error, ONE, Poly2, ZERO, clmul, divmod_poly, irreducible_of_degree,
                           is_irreducible, _is_irreducible_rabin, laurent_div, mul, powmod,
                           primitive_element)

polys16 = st.integers(min_value=0, max_value=(1 << 17) - 1).map(Poly2)


def schoolbook(a: int, b: int) -> int:
    out = 0
    for i in range(a.bit_length()):
        if (a >> i) & 1:
            for j in range(b.bit_length()):
                if (b >> j) & 1:
                    out ^= 1 << (i + j)
    return out


def digits_oracle(num: int, den: int, n: int) -> tuple[int, ...]:
    """Laurent digits by matching coefficients: num = den * (sum w_i x^-i) + O(x^{deg den - n - 1})."""
    d = den.bit_length() - 1
    # work with num * x^n / den as ordinary polynomial division; quotient bits are the digits
    q = 0
    r = num << n
    while r and r.bit_length() - 1 >= d:
        shift = r.bit_length() - 1 - d
        q ^= 1 << shift
        r ^= den << shift
    return tuple((q >> (n - 1 - i)) & 1 for i in range(n))


def test_mul_example():
    assert mul(Poly2.from_coeffs([1, 1, 1]), Poly2.from_coeffs([1, 1])) == Poly2.from_coeffs([1, 0, 0, 1])


def test_mul_identities():
    p = Poly2(0b1011011)
    assert mul(p, ZERO) == ZERO
    assert mul(p, ONE) == p


def test_coefficients_above_degree_vanish():
    p = Poly2(0b1101)
    assert p.degree == 3
    assert all(p.coeff(i) == 0 for i in range(4, 70))
    assert ZERO.degree == float("-inf")


def test_int_roundtrip():
    for k in (0, 1, 2, 37, 2 ** 40 + 5):
        assert Poly2.from_int(k).to_int() == k


def test_degree_cap():
    with pytest.raises(GF2Error):
        Poly2(1 << 64)


@given(polys16)
def test_addition_is_xor(p):
    assert p + p == ZERO


@given(polys16, polys16, polys16)
def test_distributive(a, b, c):
    assert mul(a, b + c) == mul(a, b) + mul(a, c)


@given(st.integers(0, 2 ** 20), st.integers(0, 2 ** 20))
def test_clmul_matches_schoolbook(a, b):
    assert clmul(a, b) == schoolbook(a, b)


@given(polys16, st.integers(1, (1 << 12) - 1).map(Poly2))
def test_divmod_reconstructs(a, b):
    q, r = divmod_poly(a, b)
    assert mul(q, b) + r == a
    assert r.degree < b.degree


def test_division_by_zero():
    with pytest.raises(GF2Error, match="division by zero polynomial"):
        laurent_div(ONE, ZERO, 4)


def test_laurent_examples():
    den = Poly2(0b111)
    a = laurent_div(ONE, den, 2)
    assert a.digits == (0, 1) and a.value() == 0.25
    b = laurent_div(Poly2(0b10), den, 2)
    assert b.digits == (1, 1) and b.value() == 0.75
    z = laurent_div(ZERO, den, 7)
    assert z.digits == (0,) * 7 and z.value() == 0.0


@settings(max_examples=300)
@given(st.integers(1, 8), st.data())
def test_laurent_matches_long_division_oracle(d, data):
    den = data.draw(st.integers(1 << d, (1 << (d + 1)) - 1))
    num = data.draw(st.integers(0, (1 << d) - 1))
    n = data.draw(st.integers(0, 16))
    pre = laurent_div(Poly2(num), Poly2(den), n)
    assert pre.digits == digits_oracle(num, den, n)
    assert 0.0 <= pre.value() <= 1 - 2.0 ** -n if n else pre.value() == 0.0
    assert Fraction(pre.as_int(), 2 ** n) == Fraction(pre.value()).limit_denominator(2 ** n)


def test_irreducible_examples():
    assert irreducible_of_degree(1) == Poly2(0b10)
    assert irreducible_of_degree(2) == Poly2(0b111)
    assert irreducible_of_degree(4) == Poly2(0b10011)


@pytest.mark.parametrize("n", range(1, 13))
def test_irreducible_has_no_small_divisor(n):
    p = irreducible_of_degree(n)
    assert p.degree == n
    for d in range(2, 1 << (n // 2 + 1)):
        if d.bit_length() - 1 <= n // 2:
            assert divmod_poly(p, Poly2(d))[1] != ZERO


def test_irreducible_is_smallest():
    # nothing below the returned code of the same degree is irreducible
    for n in range(1, 11):
        p = irreducible_of_degree(n)
        assert not any(is_irreducible(Poly2(c)) for c in range(1 << n, p.bits))


def test_rabin_agrees_with_trial_division():
    for c in range(2, 1 << 13):
        assert _is_irreducible_rabin(c) == is_irreducible(Poly2(c)), c


@pytest.mark.parametrize("n", [30, 40, 53, 63])
def test_high_degree_modulus(n):
    p = irreducible_of_degree(n)
    assert p.degree == n
    # x^(2^n) = x mod p is necessary for irreducibility
    assert powmod(Poly2(2), 2 ** n, p) == Poly2(2)


@pytest.mark.parametrize("n", [2, 3, 5, 8, 11])
def test_primitive_element_generates(n):
    p = irreducible_of_degree(n)
    g = Poly2(primitive_element(p))
    seen = {powmod(g, k, p) for k in range(2 ** n - 1)}
    assert len(seen) == 2 ** n - 1
