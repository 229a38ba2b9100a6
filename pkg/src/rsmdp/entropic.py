"""Entropic utility of finite discrete distributions.

    mu^gamma(X) = (1/gamma) ln E[exp(gamma X)],    mu^0(X) = E[X]

Every exponential goes through a shifted log-sum-exp; products gamma*X reach
magnitudes well past what a raw ``exp`` tolerates once rewards are divided by
(1 - beta).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# |gamma| below NEUTRAL_EPS is treated as exactly risk neutral. Between that
# and |gamma| * span(X) <= 1 the centred form
#     E[X] + log1p(E[expm1(gamma (X - E[X]))]) / gamma
# is used; the plain shifted log-sum-exp loses about 1e-16/|gamma| there.
NEUTRAL_EPS = 1e-12

_WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class FiniteDistribution:
    """Law of a random variable with finitely many outcomes."""

    values: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).ravel()
        weights = np.asarray(self.weights, dtype=float).ravel()
        if values.size == 0 or values.shape != weights.shape:
            raise ValueError("values and weights must be non-empty and of equal length")
        if not np.all(np.isfinite(values)):
            raise ValueError("outcome values must be finite")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > _WEIGHT_TOL:
            raise ValueError(f"weights must be non-negative and sum to 1 (sum={weights.sum()!r})")
        values.flags.writeable = False
        weights.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def from_pairs(cls, pairs):
        vals, wts = zip(*pairs)
        return cls(np.array(vals), np.array(wts))

    @classmethod
    def point_mass(cls, value):
        return cls(np.array([value]), np.array([1.0]))

    @property
    def mean(self) -> float:
        return float(self.weights @ self.values)

    @property
    def span(self) -> float:
        support = self.values[self.weights > 0]
        return float(support.max() - support.min())


def entropic_rows(values, weights, gamma):
    """Entropic utility along the last axis.

    ``values`` and ``weights`` broadcast against each other with outcomes on
    the last axis; ``gamma`` broadcasts against the remaining leading shape.
    Zero-weight outcomes never influence the result (they are excluded from
    the log-sum-exp shift as well).
    """
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    values, weights = np.broadcast_arrays(values, weights)
    gamma = np.asarray(gamma, dtype=float)
    gamma = np.broadcast_to(gamma, np.broadcast_shapes(gamma.shape, values.shape[:-1]))

    mean = np.sum(weights * values, axis=-1)
    abs_g = np.abs(gamma)
    if np.all(abs_g < NEUTRAL_EPS):
        return mean + 0.0 * gamma

    g = gamma[..., None]
    support = weights > 0
    big = np.where(support, values, -np.inf).max(axis=-1)
    small = np.where(support, values, np.inf).min(axis=-1)
    centred = abs_g * (big - small) <= 1.0
    safe_g = np.where(abs_g >= NEUTRAL_EPS, gamma, 1.0)

    # centred branch; |gamma * d| <= 1 so expm1 cannot overflow
    d = np.where(support, values - mean[..., None], 0.0)
    with np.errstate(over="ignore", invalid="ignore"):
        near = mean + np.log1p(np.sum(weights * np.expm1(np.where(centred[..., None], g * d, 0.0)), axis=-1)) / safe_g

    # shifted log-sum-exp branch
    z = np.where(support, g * values, -np.inf)
    shift = np.max(z, axis=-1, keepdims=True)
    with np.errstate(under="ignore"):
        terms = np.where(support, weights * np.exp(np.where(support, z - shift, 0.0)), 0.0)
    far = (shift[..., 0] + np.log(np.sum(terms, axis=-1))) / safe_g

    out = np.where(centred, near, far)
    return np.where(abs_g < NEUTRAL_EPS, mean, out)


def entropic_value(dist: FiniteDistribution, gamma: float) -> float:
    """mu^gamma of ``dist``; the arithmetic mean at gamma = 0."""
    return float(entropic_rows(dist.values, dist.weights, gamma))


def hoeffding_gap(dist: FiniteDistribution, gamma: float) -> tuple[float, float]:
    """Return ``(mu^gamma(X), E[X] + |gamma|/2 * span(X)^2)``.

    The first never exceeds the second; for gamma < 0 this is just
    mu^gamma <= E, for gamma > 0 it is Hoeffding's lemma (with room to spare,
    the lemma itself has 1/8 in place of 1/2).
    """
    if gamma == 0:
        raise ValueError("hoeffding_gap needs gamma != 0")
    lhs = entropic_value(dist, gamma)
    rhs = dist.mean + 0.5 * abs(gamma) * dist.span**2
    return lhs, rhs
