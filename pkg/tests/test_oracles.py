import math

import numpy as np
import pytest

from mdfem.oracles import (MAX_ORACLE_DIM, gauss_legendre, subset_sum_bruteforce, tensor_gauss_integrand,
                           tensor_gauss_reference, tensor_rule)
from mdfem.problemspec import DiffusionModel, FiniteWeights, ProblemSpec, SmoothSineFamily


@pytest.mark.parametrize("n", [1, 2, 5, 12, 30])
def test_gauss_legendre_matches_numpy(n):
    x, w = gauss_legendre(n)
    xr, wr = np.polynomial.legendre.leggauss(n)
    assert np.allclose(x, xr, atol=1e-14) and np.allclose(w, wr, atol=1e-14)


def test_tensor_rule_weights():
    pts, wts = tensor_rule(3, 4)
    assert pts.shape == (64, 3) and math.isclose(wts.sum(), 1.0)
    assert np.all(np.abs(pts) < 0.5)


def test_product_integrand():
    F = lambda y: np.prod(1 + 0.5 * (y + y * y), axis=1)
    assert tensor_gauss_integrand(F, 3, 3) == pytest.approx((1 + 0.5 / 12) ** 3, rel=1e-14)


def test_constant_coefficient_reference():
    prob = ProblemSpec(DiffusionModel(SmoothSineFamily(c=0.0, sigma=4), n_terms=3))
    est = tensor_gauss_reference(prob, 3, quad_degree=2, h_fine=0.25)
    assert est.value == pytest.approx(1 / 12, abs=1e-14)
    assert est.error_estimate >= 0


def test_s0_reference():
    prob = ProblemSpec(DiffusionModel(SmoothSineFamily(c=0.3, sigma=4), n_terms=3), f_name="exp")
    est = tensor_gauss_reference(prob, 0, h_fine=2.0 ** -5)
    assert est.error_estimate > 0


def test_error_estimate_shrinks():
    prob = ProblemSpec(DiffusionModel(SmoothSineFamily(c=0.3, sigma=4), n_terms=2), f_name="exp")
    ests = [tensor_gauss_reference(prob, 2, quad_degree=q, h_fine=h).error_estimate
            for q, h in [(2, 2.0 ** -3), (4, 2.0 ** -4), (6, 2.0 ** -5)]]
    assert ests[0] > ests[1] > ests[2]


def test_dimension_limit():
    prob = ProblemSpec(DiffusionModel(SmoothSineFamily(c=0.3, sigma=4), n_terms=9))
    with pytest.raises(ValueError):
        tensor_gauss_reference(prob, MAX_ORACLE_DIM + 1)


def test_subset_sum_examples():
    w = FiniteWeights((0.4,))
    assert subset_sum_bruteforce(w, 0.9, 0.5, 0) == 1.0
    assert subset_sum_bruteforce(w, 0.9, 0.5, 1) == pytest.approx(1 + 0.36 ** 0.5)
    with pytest.raises(ValueError):
        subset_sum_bruteforce(w, 1.0, 1.0, 21)
