import itertools
import math

import numpy as np
import pytest

from mdfem.kernelspace import KernelConstants, bessel_i0_one, embedding_constant, kernel_eval, kernel_u


def kernel_quadrature(alpha, x, y, n=4000):
    """K_alpha on the positive branch by midpoint quadrature of the integral term."""
    val = sum((x * y) ** r / math.factorial(r) ** 2 for r in range(1, alpha))
    a = min(x, y)
    t = (np.arange(n) + 0.5) * a / n
    integrand = (x - t) ** (alpha - 1) * (y - t) ** (alpha - 1)
    return val + integrand.sum() * a / n / math.factorial(alpha - 1) ** 2


def test_alpha1_is_min():
    assert kernel_eval(1, 0.25, 0.5) == pytest.approx(0.25, abs=1e-15)


@pytest.mark.parametrize("alpha", [1, 2, 3, 4])
def test_opposite_signs_and_anchor(alpha):
    assert kernel_eval(alpha, 0.3, -0.2) == 0.0
    assert kernel_eval(alpha, 0.0, 0.4) == 0.0
    assert kernel_eval(alpha, -0.4, 0.0) == 0.0


@pytest.mark.parametrize("alpha", [2, 3])
def test_closed_form_matches_quadrature(alpha):
    for x, y in [(0.1, 0.4), (0.5, 0.5), (0.33, 0.07)]:
        assert kernel_eval(alpha, x, y) == pytest.approx(kernel_quadrature(alpha, x, y), rel=1e-6)
        # symmetric under the sign flip of both arguments
        assert kernel_eval(alpha, -x, -y) == pytest.approx(kernel_eval(alpha, x, y), rel=1e-14)


def test_bessel_series():
    assert bessel_i0_one() == pytest.approx(1.2660658777520082, rel=1e-15)


def test_embedding_constants():
    assert embedding_constant(1) == pytest.approx(0.875252, abs=1e-6)
    # the correction term is below 1e-12 at alpha = 10
    assert embedding_constant(10) == pytest.approx(math.sqrt(bessel_i0_one() - 1), abs=1e-12)
    assert embedding_constant(10) == pytest.approx(0.5158, abs=5e-5)
    assert embedding_constant(2) == pytest.approx(math.sqrt(bessel_i0_one() - 1 + 1 / 24), rel=1e-15)
    Ms = [embedding_constant(a) for a in range(1, 8)]
    assert all(m > 0 for m in Ms)
    assert all(b <= a for a, b in zip(Ms, Ms[1:]))
    assert KernelConstants(2).M_u(3) == pytest.approx(embedding_constant(2) ** 3)


@pytest.mark.parametrize("alpha", [1, 2, 3])
def test_gram_psd(alpha):
    x = np.random.default_rng(alpha).random(20) - 0.5
    G = kernel_eval(alpha, x[:, None], x[None, :])
    assert np.linalg.eigvalsh(G).min() >= -1e-10


@pytest.mark.parametrize("alpha", [1, 2, 3])
def test_diagonal_bounded_by_M(alpha):
    x = np.linspace(-0.5, 0.5, 10_001)
    assert np.sqrt(kernel_eval(alpha, x, x)).max() <= embedding_constant(alpha)


def test_tensor_product():
    rng = np.random.default_rng(0)
    for k in range(1, 5):
        xu, yu = rng.random(k) - 0.5, rng.random(k) - 0.5
        direct = math.prod(kernel_eval(2, a, b) for a, b in zip(xu, yu))
        assert kernel_u(2, xu, yu) == pytest.approx(direct, rel=1e-14, abs=1e-300)
