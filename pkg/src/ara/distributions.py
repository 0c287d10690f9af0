"""Parametric distribution families used by node expressions.

A DistributionSpec is the fully-resolved result of evaluating a node's
expression under one parent configuration: a family name plus numeric
parameters. Specs know their support, moments, CDF and interval masses, which
is all the discretizer needs. Parameter validation happens at construction so
malformed models fail with a typed error instead of a scipy warning.

Families:
    point(c)                 degenerate mass at c (Arithmetic expressions)
    uniform(lo, hi)          continuous uniform, lo < hi
    normal(mean, variance)   variance >= 0; variance 0 collapses to a point
    tnormal(mean, variance, lo, hi)   renormalized truncation to [lo, hi]
    gamma(shape, scale)      mean = shape * scale
    binomial(trials, p)      integer support {0..trials}
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import DistributionError

_INF = math.inf


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise DistributionError(message)


@dataclass(frozen=True)
class DistributionSpec:
    family: str
    params: tuple[float, ...]

    def __post_init__(self):
        p = self.params
        if self.family == "point":
            _require(len(p) == 1 and math.isfinite(p[0]), "point requires one finite value")
        elif self.family == "uniform":
            _require(len(p) == 2, "uniform requires (lower, upper)")
            _require(p[0] < p[1], f"uniform requires lower < upper, got {p[0]} >= {p[1]}")
        elif self.family == "normal":
            _require(len(p) == 2, "normal requires (mean, variance)")
            _require(p[1] >= 0.0, f"normal variance must be >= 0, got {p[1]}")
        elif self.family == "tnormal":
            _require(len(p) == 4, "tnormal requires (mean, variance, lower, upper)")
            _require(p[1] > 0.0, f"tnormal variance must be > 0, got {p[1]}")
            _require(p[2] < p[3], f"tnormal requires lower < upper, got {p[2]} >= {p[3]}")
        elif self.family == "gamma":
            _require(len(p) == 2, "gamma requires (shape, scale)")
            _require(p[0] > 0.0, f"gamma shape must be > 0, got {p[0]}")
            _require(p[1] > 0.0, f"gamma scale must be > 0, got {p[1]}")
        elif self.family == "binomial":
            _require(len(p) == 2, "binomial requires (trials, p)")
            trials, prob = p
            _require(abs(trials - round(trials)) <= 1e-9, f"binomial trials must be an integer, got {trials}")
            _require(round(trials) >= 0, f"binomial trials must be >= 0, got {trials}")
            _require(-1e-12 <= prob <= 1.0 + 1e-12, f"binomial p must lie in [0, 1], got {prob}")
        else:
            raise DistributionError(f"unknown distribution family {self.family!r}")

    # -- canonicalized parameter access -------------------------------------

    @property
    def trials(self) -> int:
        return int(round(self.params[0]))

    @property
    def success_p(self) -> float:
        return min(1.0, max(0.0, self.params[1]))

    def _frozen(self):
        cached = self.__dict__.get("_frozen_cache")
        if cached is None:
            cached = self._build_frozen()
            object.__setattr__(self, "_frozen_cache", cached)
        return cached

    def _build_frozen(self):
        f, p = self.family, self.params
        if f == "uniform":
            return stats.uniform(loc=p[0], scale=p[1] - p[0])
        if f == "normal":
            return stats.norm(loc=p[0], scale=math.sqrt(p[1]))
        if f == "tnormal":
            mean, var, lo, hi = p
            sd = math.sqrt(var)
            return stats.truncnorm((lo - mean) / sd, (hi - mean) / sd, loc=mean, scale=sd)
        if f == "gamma":
            return stats.gamma(p[0], scale=p[1])
        if f == "binomial":
            return stats.binom(self.trials, self.success_p)
        raise AssertionError(f)

    # -- queries -------------------------------------------------------------

    @property
    def is_discrete(self) -> bool:
        return self.family in ("point", "binomial")

    def support(self) -> tuple[float, float]:
        f, p = self.family, self.params
        if f == "point":
            return (p[0], p[0])
        if f == "uniform":
            return (p[0], p[1])
        if f == "normal":
            return (p[0], p[0]) if p[1] == 0.0 else (-_INF, _INF)
        if f == "tnormal":
            return (p[2], p[3])
        if f == "gamma":
            return (0.0, _INF)
        return (0.0, float(self.trials))

    def mean(self) -> float:
        f, p = self.family, self.params
        if f == "point":
            return p[0]
        if f == "normal":
            return p[0]
        return float(self._frozen().mean())

    def variance(self) -> float:
        f, p = self.family, self.params
        if f == "point":
            return 0.0
        if f == "normal":
            return p[1]
        return float(self._frozen().var())

    def cdf(self, x: float) -> float:
        """P(X <= x)."""
        f, p = self.family, self.params
        if f == "point" or (f == "normal" and p[1] == 0.0):
            return 1.0 if x >= self.params[0] else 0.0
        return float(self._frozen().cdf(x))

    def mass_below(self, x: float) -> float:
        """P(X < x); differs from cdf only at atoms."""
        if self.family == "point" or (self.family == "normal" and self.params[1] == 0.0):
            return 1.0 if x > self.params[0] else 0.0
        if self.family == "binomial":
            return float(self._frozen().cdf(math.ceil(x) - 1))
        return self.cdf(x)

    def mass_below_many(self, xs):
        """Vectorized P(X < x) over a numpy array of thresholds."""
        xs = np.asarray(xs, dtype=float)
        if self.family == "point" or (self.family == "normal" and self.params[1] == 0.0):
            return (xs > self.params[0]).astype(float)
        if self.family == "binomial":
            return np.asarray(self._frozen().cdf(np.ceil(xs) - 1), dtype=float)
        return np.asarray(self._frozen().cdf(xs), dtype=float)

    def mass_between(self, lo: float, hi: float) -> float:
        """Mass on the half-open interval [lo, hi)."""
        return max(0.0, self.mass_below(hi) - self.mass_below(lo))

    def mass_at_most(self, x: float) -> float:
        """P(X <= x), the closed-interval companion of mass_below."""
        return self.cdf(x)

    def mean_between(self, lo: float, hi: float) -> float:
        """Conditional mean on [lo, hi); falls back to the midpoint when empty."""
        m = self.mass_between(lo, hi)
        if m <= 0.0:
            return 0.5 * (lo + hi)
        f, p = self.family, self.params
        if f == "point" or (f == "normal" and p[1] == 0.0):
            return p[0]
        if f == "binomial":
            ks = [k for k in range(self.trials + 1) if lo <= k < hi]
            dist = self._frozen()
            w = [float(dist.pmf(k)) for k in ks]
            tot = sum(w)
            return sum(k * wk for k, wk in zip(ks, w)) / tot if tot > 0 else 0.5 * (lo + hi)
        return self._partial_expectation(lo, hi) / m

    def _partial_expectation(self, lo: float, hi: float) -> float:
        """E[X * 1{lo <= X < hi}] for the continuous families."""
        f, p = self.family, self.params
        if f == "uniform":
            a, b = p
            x0, x1 = max(lo, a), min(hi, b)
            if x1 <= x0:
                return 0.0
            return 0.5 * (x0 + x1) * (x1 - x0) / (b - a)
        if f == "normal":
            mean, var = p
            sd = math.sqrt(var)
            a, b = (lo - mean) / sd, (hi - mean) / sd
            phi_a, phi_b = stats.norm.pdf(a), stats.norm.pdf(b)
            mass = stats.norm.cdf(b) - stats.norm.cdf(a)
            return mean * mass + sd * (phi_a - phi_b)
        if f == "tnormal":
            mean, var, tlo, thi = p
            sd = math.sqrt(var)
            z = stats.norm.cdf((thi - mean) / sd) - stats.norm.cdf((tlo - mean) / sd)
            x0, x1 = max(lo, tlo), min(hi, thi)
            if x1 <= x0:
                return 0.0
            a, b = (x0 - mean) / sd, (x1 - mean) / sd
            phi_a, phi_b = stats.norm.pdf(a), stats.norm.pdf(b)
            mass = stats.norm.cdf(b) - stats.norm.cdf(a)
            return (mean * mass + sd * (phi_a - phi_b)) / z
        if f == "gamma":
            shape, scale = p
            x0, x1 = max(lo, 0.0), hi
            if x1 <= x0:
                return 0.0
            bigger = stats.gamma(shape + 1.0, scale=scale)
            return shape * scale * (bigger.cdf(x1) - bigger.cdf(x0))
        raise AssertionError(f)

    def quantile(self, q: float) -> float:
        f, p = self.family, self.params
        if f == "point" or (f == "normal" and p[1] == 0.0):
            return p[0]
        return float(self._frozen().ppf(q))

    def atoms(self) -> tuple[tuple[float, float], ...]:
        """(location, mass) pairs for the discrete part of the distribution."""
        if self.family == "point" or (self.family == "normal" and self.params[1] == 0.0):
            return ((self.params[0], 1.0),)
        if self.family == "binomial":
            dist = self._frozen()
            return tuple((float(k), float(dist.pmf(k))) for k in range(self.trials + 1))
        return ()

    def pmf(self, x: float) -> float:
        """Point mass at x (0 for the continuous families)."""
        for loc, mass in self.atoms():
            if abs(loc - x) <= 1e-9:
                return mass
        return 0.0


def point(value: float) -> DistributionSpec:
    return DistributionSpec("point", (float(value),))
