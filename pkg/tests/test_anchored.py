import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mdfem import anchored
from mdfem.anchored import (SubsetSolveCache, anchored_vanishing_check, decomposed_value,
                            decomposed_values)
from mdfem.fem1d import FemSolver, Mesh1D
from mdfem.problemspec import DiffusionModel, ProblemSpec, SmoothSineFamily

PROB = ProblemSpec(DiffusionModel(SmoothSineFamily(c=0.3, sigma=4), a0=1.0, n_terms=3))
SOLVER = FemSolver(PROB, Mesh1D(16, 1))


def G(y):
    return SOLVER.functional_batch(np.asarray(y, dtype=float)[None, :])[0]


def test_empty_and_single():
    assert decomposed_value((), [], SOLVER) == G([0, 0, 0])
    assert decomposed_value((2,), [0.3], SOLVER) == G([0, 0.3, 0]) - G([0, 0, 0])


def test_pair_telescopes():
    y = [0.31, -0.22]
    total = (decomposed_value((1, 2), y, SOLVER) + decomposed_value((1,), y[:1], SOLVER)
             + decomposed_value((2,), y[1:], SOLVER) + decomposed_value((), [], SOLVER))
    assert abs(total - G([0.31, -0.22, 0])) <= 1e-12


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-0.5, 0.5), min_size=3, max_size=3))
def test_telescoping_identity(y):
    y = np.array(y)
    total = 0.0
    for r in range(4):
        for u in itertools.combinations((1, 2, 3), r):
            total += decomposed_value(u, y[[j - 1 for j in u]], SOLVER)
    assert abs(total - G(y)) <= 1e-12


@pytest.mark.parametrize("u,yu", [((1,), [0.0]), ((1, 2), [0.4, 0.0]), ((1, 2, 3), [0.1, 0.0, -0.3])])
def test_vanishing(u, yu):
    assert abs(anchored_vanishing_check(u, yu, SOLVER)) <= 1e-15
    with pytest.raises(ValueError):
        anchored_vanishing_check(u, [0.1] * len(u), SOLVER)


def test_cache_bit_identical_and_solve_count():
    Y = np.random.default_rng(0).random((6, 3)) - 0.5
    plain = decomposed_values((1, 2, 3), Y, SOLVER)
    cache = SubsetSolveCache()
    cached = decomposed_values((1, 2, 3), Y, SOLVER, cache)
    assert np.array_equal(plain, cached)
    # empty subset shared across rows, every other y_v distinct
    assert cache.misses == 1 + 6 * 7
    again = decomposed_values((1, 2, 3), Y, SOLVER, cache)
    assert np.array_equal(again, plain) and cache.misses == 43


def test_single_point_solve_count():
    cache = SubsetSolveCache()
    decomposed_value((1, 2, 3), [0.1, 0.2, 0.3], SOLVER, cache)
    assert cache.misses == 8


def test_fault_hook_breaks_telescoping():
    y = np.array([0.2, 0.3, -0.1])
    anchored.FAULT = "sign"
    try:
        total = sum(decomposed_value(u, y[[j - 1 for j in u]], SOLVER)
                    for r in range(4) for u in itertools.combinations((1, 2, 3), r))
    finally:
        anchored.FAULT = None
    assert abs(total - G(y)) > 1e-3


def test_shape_check():
    with pytest.raises(ValueError):
        decomposed_values((1, 2), np.zeros((3, 3)), SOLVER)
