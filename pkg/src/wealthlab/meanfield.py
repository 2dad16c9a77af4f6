"""Mean-field stationary wealth distributions.

Anchoring an agent's neighbour income to its expected value ``m`` turns
its wealth into the one-dimensional diffusion

    dv = (m - v) dt + sqrt(2) sigma v dW,

whose stationary law is inverse-gamma with shape ``1 + 1/sigma^2`` and
scale ``m / sigma^2``. On a complete network ``m = 1``; on a general
network ``m = k_i / z``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import special

from .exceptions import DomainError, InsufficientSamplesError
from .network import ExchangeNetwork, stationary_wealth


class Moments(NamedTuple):
    mean: float
    variance: float
    divergent: bool


@dataclass(frozen=True)
class MeanFieldDistribution:
    """Inverse-gamma law of a mean-field-anchored agent."""

    mean: float
    sigma: float

    def __post_init__(self):
        if not self.mean > 0:
            raise DomainError("mean wealth must be positive")
        if not self.sigma > 0:
            raise DomainError("sigma must be positive (no stationary spread without noise)")

    @classmethod
    def for_network(cls, net: ExchangeNetwork, sigma) -> list:
        """One distribution per agent, anchored at ``k_i / z``."""
        return [cls(float(m), sigma) for m in stationary_wealth(net)]

    @property
    def shape(self) -> float:
        return 1.0 + 1.0 / self.sigma ** 2

    @property
    def scale(self) -> float:
        return self.mean / self.sigma ** 2

    @property
    def log_norm(self) -> float:
        return self.shape * math.log(self.scale) - special.gammaln(self.shape)

    @property
    def norm(self) -> float:
        """Normalisation constant ``scale**shape / Gamma(shape)``."""
        return math.exp(self.log_norm)

    def logpdf(self, v):
        v = np.asarray(v, dtype=float)
        if np.any(v <= 0):
            raise DomainError("the density is defined for positive wealth only")
        return self.log_norm - self.scale / v - (1.0 + self.shape) * np.log(v)

    def pdf(self, v):
        return np.exp(self.logpdf(v))

    def cdf(self, v):
        """``P(V <= v) = Q(shape, scale / v)`` (regularised upper incomplete gamma)."""
        v = np.asarray(v, dtype=float)
        with np.errstate(divide="ignore"):
            return np.where(v > 0, special.gammaincc(self.shape, self.scale / np.where(v > 0, v, 1.0)), 0.0)

    def sf(self, v):
        v = np.asarray(v, dtype=float)
        with np.errstate(divide="ignore"):
            return np.where(v > 0, special.gammainc(self.shape, self.scale / np.where(v > 0, v, 1.0)), 1.0)

    def moments(self) -> Moments:
        if self.sigma >= 1:
            return Moments(self.mean, math.inf, True)
        s2 = self.sigma ** 2
        return Moments(self.mean, self.mean ** 2 * s2 / (1.0 - s2), False)

    @property
    def density_tail_exponent(self) -> float:
        return 1.0 + self.shape

    @property
    def survival_tail_exponent(self) -> float:
        return self.shape

    def sample(self, rng, count: int) -> np.ndarray:
        """Draws whose reciprocals are Gamma(shape, rate=scale)."""
        if count < 1:
            raise ValueError("count must be >= 1")
        rng = np.random.default_rng(rng)
        return 1.0 / rng.gamma(self.shape, 1.0 / self.scale, size=count)


def pdf(dist: MeanFieldDistribution, v):
    return dist.pdf(v)


def moments(dist: MeanFieldDistribution) -> Moments:
    return dist.moments()


def sample(dist: MeanFieldDistribution, rng, count: int) -> np.ndarray:
    return dist.sample(rng, count)


def fit_distance(dist: MeanFieldDistribution, snapshot, min_samples=100) -> float:
    """Kolmogorov-Smirnov distance between a wealth sample and ``dist``."""
    x = np.sort(np.asarray(snapshot, dtype=float).ravel())
    n = len(x)
    if n < min_samples:
        raise InsufficientSamplesError(f"need at least {min_samples} samples, got {n}")
    F = dist.cdf(x)
    # ties: compare against the ECDF just before and at each distinct value
    hi = np.searchsorted(x, x, side="right") / n
    lo = np.searchsorted(x, x, side="left") / n
    return float(max(np.max(hi - F), np.max(F - lo)))


def hill_estimator(samples, k):
    """Hill estimate of the survival-function exponent from the top ``k`` order statistics."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())[::-1]
    if not 1 <= k < len(x):
        raise ValueError("k must satisfy 1 <= k < number of samples")
    if x[k] <= 0:
        raise DomainError("Hill estimator needs positive order statistics")
    return 1.0 / np.mean(np.log(x[:k] / x[k]))


def tail_exponent_estimate(samples, k=None, min_samples=1000) -> float:
    """Survival-function tail exponent; ``k`` defaults to ``ceil(sqrt(n))``."""
    n = np.asarray(samples).size
    if n < min_samples:
        raise InsufficientSamplesError(f"need at least {min_samples} samples, got {n}")
    if k is None:
        k = math.ceil(math.sqrt(n))
    return float(hill_estimator(samples, k))
