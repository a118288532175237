"""Anchored reproducing kernel of order alpha and its embedding constant."""

from __future__ import annotations

from dataclasses import dataclass
from math import comb, factorial, sqrt
from typing import Sequence

import numpy as np


def bessel_i0_one(terms: int = 30) -> float:
    """I_0(1) from its power series sum (1/4)^k / (k!)^2."""
    total = 0.0
    term = 1.0
    for k in range(terms):
        if k:
            term *= 0.25 / (k * k)
        total += term
    return total


def _positive_branch(alpha: int, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    a = np.minimum(x, y)
    b = np.maximum(x, y)
    out = np.zeros(np.broadcast(a, b).shape)
    for r in range(1, alpha):
        out = out + (x * y) ** r / factorial(r) ** 2
    # int_0^a (x-t)^(alpha-1) (y-t)^(alpha-1) dt with s = a - t:
    # (b-a+s)^(alpha-1) s^(alpha-1) expanded binomially in s
    integral = np.zeros_like(out)
    for i in range(alpha):
        integral = integral + comb(alpha - 1, i) * (b - a) ** (alpha - 1 - i) * a ** (alpha + i) / (alpha + i)
    return out + integral / factorial(alpha - 1) ** 2


def kernel_eval(alpha: int, x, y):
    """K_alpha(x, y); zero unless x and y are nonzero with the same sign."""
    if alpha < 1:
        raise ValueError("alpha must be a positive integer")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    same = ((x > 0) & (y > 0)) | ((x < 0) & (y < 0))
    val = _positive_branch(alpha, np.abs(x), np.abs(y))
    out = np.where(same, val, 0.0)
    return float(out) if out.ndim == 0 else out


def kernel_u(alpha: int, xu: Sequence[float], yu: Sequence[float]) -> float:
    """Tensor-product kernel over the coordinates of a subset."""
    return float(np.prod(kernel_eval(alpha, np.asarray(xu, float), np.asarray(yu, float))))


def embedding_constant(alpha: int) -> float:
    if alpha < 1:
        raise ValueError("alpha must be a positive integer")
    corr = 1.0 / (factorial(alpha - 1) ** 2 * (2 * alpha - 1) * 2.0 ** (2 * alpha - 1))
    return sqrt(bessel_i0_one() - 1.0 + corr)


@dataclass(frozen=True)
class KernelConstants:
    alpha: int

    @property
    def M(self) -> float:
        return embedding_constant(self.alpha)

    def M_u(self, card: int) -> float:
        return self.M ** card
