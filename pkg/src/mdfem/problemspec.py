"""PDE data, coefficient families, weights and derived rate parameters.

The random diffusion coefficient is a(x, y) = a0(x) + sum_j y_j phi_j(x) with
y_j uniform on [-1/2, 1/2].  Two closed-form families of phi_j are built in;
a finite explicit family covers small hand-made cases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .kernelspace import embedding_constant


class AdmissibilityError(ValueError):
    """A standing assumption of the method is violated."""


def zeta(s: float, terms: int = 20000) -> float:
    """Riemann zeta for s > 1: partial sum plus Euler-Maclaurin tail."""
    if s <= 1:
        raise ValueError("zeta needs s > 1")
    N = terms
    j = np.arange(1, N, dtype=float)
    return float(np.sum(j ** -s) + N ** (1 - s) / (s - 1) + 0.5 * N ** -s + s * N ** (-s - 1) / 12)


# ---------------------------------------------------------------------------
# coefficient families


class CoefficientFamily:
    """Interface for phi_j and b_j.  Indices j start at 1."""

    def phi(self, j: int, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def b(self, j: int) -> float:
        raise NotImplementedError

    def sup_norm(self, j: int) -> float:
        raise NotImplementedError

    # optional certified bounds; None means "not available"
    def ratio_tail(self, J: int) -> float | None:
        """Bound on sup_x sum_{j>J} |phi_j(x)| / b_j."""
        return None

    def ratio_lipschitz(self, J: int) -> float | None:
        """Lipschitz bound of x -> sum_{j<=J} |phi_j(x)| / b_j."""
        return None

    def ratio_sup_bound(self) -> float | None:
        """Bound on sup_x sum_j |phi_j(x)| / b_j over all j."""
        return None

    def b_tail_sum(self, J: int, p: float, scale: float = 1.0) -> float | None:
        """Bound on sum_{j>J} (scale * b_j)^p."""
        return None

    def b_envelope_index(self, t: float) -> int | None:
        """An index J with b_j <= t for every j > J."""
        return None

    @property
    def size(self) -> int | None:
        """Number of nonzero terms, None when infinite."""
        return None


@dataclass(frozen=True)
class SmoothSineFamily(CoefficientFamily):
    """phi_j = c j^-sigma sin(j pi x), b_j = nu j^(-sigma + 3/2)."""

    c: float
    sigma: float
    nu: float = 1.0

    def __post_init__(self):
        if self.sigma <= 2.5:
            raise AdmissibilityError("smooth family needs sigma > 5/2 so that b_j decays")
        if not 0 < self.nu <= 1:
            raise AdmissibilityError("b_j must lie in (0, 1]: need 0 < nu <= 1")

    @property
    def beta(self) -> float:
        return self.sigma - 1.5

    def phi(self, j, x):
        return self.c * j ** -self.sigma * np.sin(j * np.pi * np.asarray(x))

    def dphi(self, j, x):
        return self.c * j ** -self.sigma * j * np.pi * np.cos(j * np.pi * np.asarray(x))

    def b(self, j):
        return self.nu * j ** -self.beta

    def sup_norm(self, j):
        return abs(self.c) * j ** -self.sigma

    def ratio_tail(self, J):
        # |phi_j|/b_j <= |c|/nu j^-3/2; integral bound of the tail
        return abs(self.c) / self.nu * 2.0 / math.sqrt(J) if J >= 1 else math.inf

    def ratio_lipschitz(self, J):
        return abs(self.c) / self.nu * math.pi * (2.0 * math.sqrt(J))

    def ratio_sup_bound(self):
        return abs(self.c) / self.nu * zeta(1.5)

    def b_tail_sum(self, J, p, scale=1.0):
        e = self.beta * p
        if e <= 1:
            return None
        head = 1.0 if J == 0 else 0.0
        J = max(J, 1)
        return (scale * self.nu) ** p * (head + J ** (1 - e) / (e - 1))

    def b_envelope_index(self, t):
        if t >= self.nu:
            return 0
        return int(math.ceil((self.nu / t) ** (1.0 / self.beta)))


def _level_pos(j: int) -> tuple[int, int]:
    level = j.bit_length()
    return level, j - (1 << (level - 1))


@dataclass(frozen=True)
class DyadicHatFamily(CoefficientFamily):
    """Dyadic hat functions, coarse to fine, no overlap within a level.

    Level l holds 2^(l-1) hats of width 2^-(l-1) with height sigma 2^(-alpha_hat l);
    b = c_delta sigma l^(1+delta) 2^(-alpha_hat l).
    """

    sigma: float
    alpha_hat: float
    c_delta: float = 1.0
    delta: float = 1.0

    def __post_init__(self):
        if self.delta <= 0 or self.c_delta <= 0 or self.sigma <= 0 or self.alpha_hat <= 0:
            raise AdmissibilityError("hat family parameters must be positive")

    def phi(self, j, x):
        level, k = _level_pos(j)
        w = 2.0 ** -(level - 1)
        t = (np.asarray(x) - k * w) / w
        hat = np.clip(1.0 - np.abs(2.0 * t - 1.0), 0.0, None)
        return self.sigma * 2.0 ** (-self.alpha_hat * level) * hat

    def b_level(self, level: int) -> float:
        return self.c_delta * self.sigma * level ** (1 + self.delta) * 2.0 ** (-self.alpha_hat * level)

    def b(self, j):
        return self.b_level(_level_pos(j)[0])

    def sup_norm(self, j):
        return self.sigma * 2.0 ** (-self.alpha_hat * _level_pos(j)[0])

    def _levels_done(self, J: int) -> int:
        # full levels contained in 1..J
        return (J + 1).bit_length() - 1

    def ratio_tail(self, J):
        # every level contributes at most 1/(c l^(1+delta)) pointwise; a partly
        # covered level is charged in full
        L = self._levels_done(J)
        d = self.delta
        return (L ** -d / d if L >= 1 else zeta(1 + d)) / self.c_delta

    def ratio_lipschitz(self, J):
        top = max(_level_pos(J)[0], 1) if J >= 1 else 0
        return sum(2.0 ** l / (self.c_delta * l ** (1 + self.delta)) for l in range(1, top + 1))

    def ratio_sup_bound(self):
        return zeta(1 + self.delta) / self.c_delta

    def b_tail_sum(self, J, p, scale=1.0):
        if self.alpha_hat * p <= 1:
            return None
        L = self._levels_done(J)
        # sum over levels > L of 2^(l-1) (scale b_l)^p, summed explicitly until the
        # geometric ratio is safely below 1, then closed form
        total = 0.0
        l = L + 1
        while True:
            term = 2.0 ** (l - 1) * (scale * self.b_level(l)) ** p
            ratio = 2.0 * ((l + 1) / l) ** ((1 + self.delta) * p) * 2.0 ** (-self.alpha_hat * p)
            if ratio < 0.9 and l > L + 2:
                return total + term / (1 - ratio)
            total += term
            l += 1
            if l > 4000:
                return None

    def b_envelope_index(self, t):
        # b_level is eventually decreasing; scan until it is below t and decreasing
        l = 1
        while l < 2000:
            if self.b_level(l) <= t and all(self.b_level(k) <= self.b_level(l) for k in range(l, l + 3)):
                ratio = ((l + 1) / l) ** (1 + self.delta) * 2.0 ** -self.alpha_hat
                if ratio < 1:
                    return (1 << (l - 1)) - 1
            l += 1
        return None


@dataclass(frozen=True)
class FiniteFamily(CoefficientFamily):
    """Explicit finite list of callables phi_j with their b_j."""

    funcs: tuple[Callable[[np.ndarray], np.ndarray], ...]
    bvals: tuple[float, ...]
    sups: tuple[float, ...] | None = None

    def phi(self, j, x):
        x = np.asarray(x, dtype=float)
        if j > len(self.funcs):
            return np.zeros_like(x)
        return np.broadcast_to(np.asarray(self.funcs[j - 1](x), dtype=float), x.shape)

    def b(self, j):
        return self.bvals[j - 1] if j <= len(self.bvals) else 0.0

    def sup_norm(self, j):
        if j > len(self.funcs):
            return 0.0
        if self.sups is not None:
            return self.sups[j - 1]
        xs = np.linspace(0, 1, 10001)
        return float(np.abs(self.phi(j, xs)).max())

    def ratio_tail(self, J):
        return 0.0 if J >= len(self.funcs) else None

    def ratio_lipschitz(self, J):
        return None

    def b_tail_sum(self, J, p, scale=1.0):
        return 0.0 if J >= len(self.funcs) else None

    def b_envelope_index(self, t):
        return len(self.funcs)

    @property
    def size(self):
        return len(self.funcs)


# ---------------------------------------------------------------------------
# named closed-form functions used for a0 fluctuations, f and g

NAMED_FUNCTIONS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "one": lambda x: np.ones_like(np.asarray(x, dtype=float)),
    "sin": lambda x: np.sin(np.pi * np.asarray(x)),
    "cos": lambda x: np.cos(np.pi * np.asarray(x)),
    "x": lambda x: np.asarray(x, dtype=float),
    "exp": lambda x: np.exp(np.asarray(x)),
}


def named_function(spec: str) -> Callable[[np.ndarray], np.ndarray]:
    spec = spec.strip()
    if spec in NAMED_FUNCTIONS:
        return NAMED_FUNCTIONS[spec]
    try:
        c = float(spec)
    except ValueError:
        raise ValueError(f"unknown function {spec!r}; choose from {sorted(NAMED_FUNCTIONS)} or a number")
    return lambda x: np.full(np.shape(x), c)


# ---------------------------------------------------------------------------
# model


@dataclass(frozen=True)
class DiffusionModel:
    """a(x, y) = a0 + a0_amp sin(pi x) + sum_{j <= n_terms} y_j phi_j(x)."""

    family: CoefficientFamily
    a0: float = 1.0
    a0_amp: float = 0.0
    pstar: float = 0.5
    n_terms: int | None = None
    j_max_eval: int = 512

    def __post_init__(self):
        if not 0 < self.pstar < 1:
            raise AdmissibilityError("p* must lie in (0,1)")
        if self.a0_min <= 0:
            raise AdmissibilityError("a0 must be bounded away from zero")
        if self.n_terms is not None and self.n_terms < 0:
            raise AdmissibilityError("n_terms must be nonnegative")
        if self.family.size is None and self.n_terms is None:
            if self.family.b_tail_sum(1, self.pstar) is None:
                raise AdmissibilityError(f"b_j is not p*-summable for p* = {self.pstar}")

    @property
    def a0_min(self) -> float:
        # sin(pi x) ranges over [0, 1] on the unit interval
        return self.a0 + min(self.a0_amp, 0.0)

    @property
    def a0_max(self) -> float:
        return self.a0 + max(self.a0_amp, 0.0)

    def a0_eval(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.a0 + self.a0_amp * np.sin(np.pi * x)

    @property
    def size(self) -> int | None:
        """Number of active parameters, None when infinite."""
        fs = self.family.size
        if self.n_terms is None:
            return fs
        return self.n_terms if fs is None else min(fs, self.n_terms)

    def phi(self, j: int, x: np.ndarray) -> np.ndarray:
        if self.size is not None and j > self.size:
            return np.zeros_like(np.asarray(x, dtype=float))
        return self.family.phi(j, x)

    def phi_matrix(self, J: int, x: np.ndarray) -> np.ndarray:
        """phi_j(x) for j = 1..J stacked into shape (J, len(x))."""
        x = np.asarray(x, dtype=float)
        out = np.zeros((J, x.size))
        for j in range(1, J + 1):
            out[j - 1] = self.phi(j, x).ravel()
        return out

    def b(self, j: int) -> float:
        return self.family.b(j)

    def weights(self) -> "Weights":
        return Weights(self)


def compute_kappa(model: DiffusionModel, grid: int = 10_000) -> float:
    """Certified upper bound on sup_x (sum_j |phi_j|/b_j) / (2 a0)."""
    fam = model.family
    size = model.size
    J = size if size is not None else model.j_max_eval
    bounds = []
    if size is not None and size < (fam.size or math.inf):
        tail = 0.0
    else:
        tail = fam.ratio_tail(J)
    if J == 0:
        return 0.0
    if tail is None and fam.ratio_sup_bound() is None:
        raise AdmissibilityError("tail bound required")
    if tail is not None:
        xs = np.linspace(0.0, 1.0, grid)
        acc = np.zeros(grid)
        for j in range(1, J + 1):
            bj = fam.b(j)
            if bj <= 0:
                raise AdmissibilityError(f"b_{j} must be positive")
            acc += np.abs(fam.phi(j, xs)) / bj
        a0 = model.a0_eval(xs)
        vals = acc / (2.0 * a0)
        lip = fam.ratio_lipschitz(J)
        if lip is not None:
            # derivative of acc/(2 a0) bounded via the quotient rule
            acc_max = float(acc.max()) + lip * (xs[1] - xs[0]) / 2
            dq = (lip * model.a0_max + acc_max * abs(model.a0_amp) * math.pi) / (2.0 * model.a0_min ** 2)
            bounds.append(float(vals.max()) + dq * (xs[1] - xs[0]) / 2 + tail / (2.0 * model.a0_min))
        elif size is not None:
            # finite explicit family without smoothness info: grid value as stated
            bounds.append(float(vals.max()) + tail / (2.0 * model.a0_min))
    sup = fam.ratio_sup_bound()
    if sup is not None:
        bounds.append(sup / (2.0 * model.a0_min))
    return min(bounds)


# ---------------------------------------------------------------------------
# weights


class Weights:
    """Product weights gamma_j = b_j, zero beyond the model's truncation."""

    def __init__(self, model: DiffusionModel):
        self.model = model

    @property
    def support(self) -> int | None:
        return self.model.size

    def gamma(self, j: int) -> float:
        if self.support is not None and j > self.support:
            return 0.0
        return self.model.b(j)

    def gamma_u(self, u: Sequence[int]) -> float:
        return float(np.prod([self.gamma(j) for j in u])) if len(u) else 1.0

    def tail_sum(self, J: int, p: float, scale: float = 1.0) -> float | None:
        """Bound on sum_{j>J} (scale gamma_j)^p."""
        if self.support is not None and J >= self.support:
            return 0.0
        return self.model.family.b_tail_sum(J, p, scale)

    def envelope_index(self, t: float) -> int | None:
        """An index J with gamma_j <= t for all j > J."""
        if self.support is not None:
            return self.support
        return self.model.family.b_envelope_index(t)

    def fingerprint(self, u: Sequence[int]) -> tuple[float, ...]:
        return tuple(self.gamma(j) for j in u)


@dataclass(frozen=True)
class FiniteWeights:
    """Explicit finite weight list, for tests and MDM-only experiments."""

    values: tuple[float, ...]

    @property
    def support(self) -> int:
        return len(self.values)

    def gamma(self, j: int) -> float:
        return self.values[j - 1] if 1 <= j <= len(self.values) else 0.0

    def gamma_u(self, u):
        return float(np.prod([self.gamma(j) for j in u])) if len(u) else 1.0

    def tail_sum(self, J, p, scale=1.0):
        return float(sum((scale * v) ** p for v in self.values[J:] if v > 0))

    def envelope_index(self, t):
        return len(self.values)


def product_weight_sum(weights, M: float, pstar: float, tol: float = 1e-12,
                       max_terms: int = (1 << 20) - 1) -> tuple[float, float]:
    """Interval [lower, upper] for prod_j (1 + (gamma_j M)^p*).

    The finite product is extended until the analytic tail of
    sum log(1 + (gamma_j M)^p*) <= sum (gamma_j M)^p* drops below tol.
    """
    lower = 1.0
    J = 0
    if weights.support is not None:
        for j in range(1, weights.support + 1):
            lower *= 1.0 + (weights.gamma(j) * M) ** pstar
        return lower, lower
    # tails are checked at J = 2^k - 1 so the loop stays linear in J
    next_check = 0
    while True:
        if J == next_check:
            tail = weights.tail_sum(J, pstar, M)
            if tail is None:
                raise AdmissibilityError("weight sum diverges or has no tail bound")
            if tail <= tol or J >= max_terms:
                return lower, lower * math.exp(tail)
            next_check = 2 * J + 1
        J += 1
        lower *= 1.0 + (weights.gamma(J) * M) ** pstar


# ---------------------------------------------------------------------------
# rates and constants


@dataclass(frozen=True)
class RateParams:
    d: int
    t: float
    tprime: float
    lam: float
    alpha: int
    mode: str
    a_mdm: float
    pstar: float

    @property
    def tau(self) -> float:
        return self.t + self.tprime


def rate_lambda(tau: float, pstar: float, d: int = 1) -> float:
    return tau * (1 - pstar) / (pstar * (tau + d))


def derive_rates(model_or_pstar, t: float, tprime: float, kappa: float | None = None,
                 d: int = 1) -> RateParams:
    """Rate parameters from p* and the asserted regularities t, t'.

    Pass a DiffusionModel to also check the kappa condition (or pass kappa).
    """
    if isinstance(model_or_pstar, DiffusionModel):
        pstar = model_or_pstar.pstar
        if kappa is None:
            kappa = compute_kappa(model_or_pstar)
    else:
        pstar = float(model_or_pstar)
    if not 0 < pstar < 1:
        raise AdmissibilityError("p* must lie in (0,1)")
    if t <= 0 or tprime <= 0:
        raise AdmissibilityError("t and t' must be positive")
    tau = t + tprime
    lam = rate_lambda(tau, pstar, d)
    if lam < 0.5:
        raise AdmissibilityError(f"lambda = {lam:.4g} < 1/2: no theorem branch applies")
    alpha = int(math.floor(lam)) + 1
    mode = "deterministic" if lam >= 1 else "randomized"
    if kappa is not None:
        bound = 1.0 / (2 * alpha + 1)
        if kappa >= bound:
            raise AdmissibilityError(
                f"kappa {kappa:.4g} >= 1/(2*alpha+1) = {bound:.4g} (alpha = {alpha})")
    a_mdm = d / tau + (1 + d / tau) * pstar / (1 - pstar)
    return RateParams(d=d, t=t, tprime=tprime, lam=lam, alpha=alpha, mode=mode,
                      a_mdm=a_mdm, pstar=pstar)


def c_one(lam: float) -> float:
    if not 0.5 <= lam < 1:
        raise AdmissibilityError(f"lambda = {lam} outside [1/2, 1)")
    base = (13.0 / 12.0) ** (1.0 / (2 * lam))
    if lam == 0.5:
        return base + 1.0 / 6.0
    return base + 1.0 / (3.0 ** (1.0 / (2 * lam)) * (2.0 ** (1.0 / lam) - 2.0))


def c_tilde(alpha: int, lam: float) -> float:
    if not 1 <= lam < alpha:
        raise AdmissibilityError(f"lambda = {lam} outside [1, {alpha})")
    if lam == 1:
        return float(alpha - 1)
    r = 2.0 ** (1.0 / lam) - 1.0
    return (1.0 - r ** (alpha - 1)) / ((2.0 - 2.0 ** (1.0 / lam)) * r ** (alpha - 1))


def c_alpha(alpha: int, lam: float) -> float:
    prod = 1.0
    for j in range(1, alpha):
        prod /= 2.0 ** (j / lam) - 1.0
    inner = c_tilde(alpha, lam) + prod / (2.0 ** (alpha / lam) - 2.0)
    return 1.0 + math.sqrt(alpha) * math.factorial(alpha) * 1.5 * 2.5 ** (alpha - 1) * inner


@dataclass(frozen=True)
class CubatureConstants:
    alpha: int
    lam: float
    mode: str
    C1: float | None
    Calpha: float | None
    Ctilde: float | None

    def C_u(self, card: int) -> float:
        if self.mode == "randomized":
            return 2.0 ** self.lam * self.C1 ** (card * self.lam)
        return self.Calpha ** (card * self.lam)


def cubature_constants(rates: RateParams) -> CubatureConstants:
    if rates.mode == "randomized":
        return CubatureConstants(1, rates.lam, "randomized", c_one(rates.lam), None, None)
    return CubatureConstants(rates.alpha, rates.lam, "deterministic", None,
                             c_alpha(rates.alpha, rates.lam), c_tilde(rates.alpha, rates.lam))


def c_kappa_alpha(kappa: float, alpha: int) -> float:
    if kappa < 0:
        raise ValueError("kappa must be nonnegative")
    if kappa >= 1.0 / (2 * alpha + 1):
        raise AdmissibilityError(f"kappa {kappa} >= 1/(2*alpha+1): series diverges")
    r = (2 * alpha * kappa / (1 - kappa)) ** 2
    return r / (1 - r)


# ---------------------------------------------------------------------------
# functional


def _bump(x, x0, w):
    r = (np.asarray(x, dtype=float) - x0) / w
    out = np.zeros_like(r)
    inside = np.abs(r) < 1
    out[inside] = np.exp(-1.0 / (1.0 - r[inside] ** 2))
    return out


@dataclass(frozen=True)
class Functional:
    """G(v) = integral of g v over [0, 1]; a smoothed point value uses a bump g."""

    kind: str = "integral"
    g_name: str = "one"
    tprime: float = 1.0
    x0: float = 0.5
    width: float = 0.1
    _norm: float = field(default=1.0, repr=False)

    def __post_init__(self):
        if self.kind not in ("integral", "point"):
            raise ValueError(f"unknown functional kind {self.kind!r}")
        if self.kind == "point":
            if not (0 < self.x0 - self.width and self.x0 + self.width < 1):
                raise ValueError("bump support must lie inside (0, 1)")
            from numpy.polynomial.legendre import leggauss
            t, w = leggauss(200)
            xs = self.x0 + self.width * t
            object.__setattr__(self, "_norm", float(self.width * np.dot(w, _bump(xs, self.x0, self.width))))
        else:
            named_function(self.g_name)

    @property
    def polynomial_degree(self) -> int | None:
        if self.kind == "integral":
            if self.g_name == "x":
                return 1
            try:
                float(self.g_name)
                return 0
            except ValueError:
                return 0 if self.g_name == "one" else None
        return None

    def g(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "point":
            return _bump(x, self.x0, self.width) / self._norm
        return named_function(self.g_name)(x)


@dataclass(frozen=True)
class ProblemSpec:
    model: DiffusionModel
    f_name: str = "one"
    G: Functional = Functional()
    t: float = 1.0

    def f(self, x):
        return named_function(self.f_name)(x)

    @property
    def tprime(self) -> float:
        return self.G.tprime

    def rates(self, kappa: float | None = None) -> RateParams:
        return derive_rates(self.model, self.t, self.tprime, kappa=kappa)


def weight_model_M(alpha: int) -> float:
    return embedding_constant(alpha)
