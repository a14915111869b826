"""Bregman divergences and Bregman information over discrete distributions.

Points are scalars or 1-D vectors. A :class:`ConvexFunctional` bundles the
function, its gradient and a domain test; ``interior`` tests membership in
the relative interior, where the gradient is defined.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError

# Linear-domain guard for -log; loss code uses the log-domain form instead.
NEG_LOG_FLOOR = 1e-300


@dataclass(frozen=True)
class ConvexFunctional:
    name: str
    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    domain_contains: Callable[[np.ndarray], bool]
    interior: Callable[[np.ndarray], bool]

    def __call__(self, x) -> float:
        return self.value(np.asarray(x, dtype=np.float64))


def _all_finite(x):
    return bool(np.all(np.isfinite(x)))


NEG_LOG = ConvexFunctional(
    name="neg_log",
    value=lambda x: float(-np.sum(np.log(x))),
    gradient=lambda x: -1.0 / x,
    domain_contains=lambda x: _all_finite(x) and bool(np.all(x > NEG_LOG_FLOOR)),
    interior=lambda x: _all_finite(x) and bool(np.all(x > NEG_LOG_FLOOR)),
)

SQUARED_NORM = ConvexFunctional(
    name="squared_norm",
    value=lambda x: float(np.sum(x * x)),
    gradient=lambda x: 2.0 * x,
    domain_contains=_all_finite,
    interior=_all_finite,
)


def _xlogx(x):
    safe = np.where(x > 0, x, 1.0)
    return float(np.sum(np.where(x > 0, x * np.log(safe), 0.0)))


X_LOG_X = ConvexFunctional(
    name="x_log_x",
    value=_xlogx,
    gradient=lambda x: np.log(x) + 1.0,
    domain_contains=lambda x: _all_finite(x) and bool(np.all(x >= 0)),
    interior=lambda x: _all_finite(x) and bool(np.all(x > 0)),
)

FUNCTIONALS = {f.name: f for f in (NEG_LOG, SQUARED_NORM, X_LOG_X)}


@dataclass(frozen=True)
class DiscreteDistribution:
    """Finitely supported random variable: ``points[i]`` with probability ``weights[i]``."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        w = np.asarray(self.weights, dtype=np.float64)
        if pts.ndim == 0 or pts.shape[0] == 0:
            raise ValueError("a distribution needs at least one point")
        if w.shape != (pts.shape[0],):
            raise ValueError(f"{w.shape[0] if w.ndim else 0} weights for {pts.shape[0]} points")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be non-negative and sum to 1")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, points: Sequence) -> "DiscreteDistribution":
        pts = np.asarray(points, dtype=np.float64)
        return cls(pts, np.full(pts.shape[0], 1.0 / pts.shape[0]))

    def mean(self) -> np.ndarray:
        return np.tensordot(self.weights, self.points, axes=1)


def bregman_divergence(phi: ConvexFunctional, a, b) -> float:
    """``phi(a) - phi(b) - <a - b, grad phi(b)>``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if not phi.domain_contains(a):
        raise DomainError(f"{phi.name}: first argument {a!r} outside the domain")
    if not phi.interior(b):
        raise DomainError(f"{phi.name}: second argument {b!r} outside the relative interior")
    return phi.value(a) - phi.value(b) - float(np.sum((a - b) * phi.gradient(b)))


def _check_points(phi, dist):
    for i, t in enumerate(dist.points):
        if not phi.domain_contains(t):
            raise DomainError(f"{phi.name}: support point {i} = {t!r} outside the domain", index=i)
    mu = dist.mean()
    if not phi.interior(mu):
        raise DomainError(f"{phi.name}: mean {mu!r} outside the relative interior")
    return mu


def bregman_information(phi: ConvexFunctional, dist: DiscreteDistribution) -> float:
    """Expected divergence of the points from their mean, ``sum_i w_i d(t_i, mu)``."""
    mu = _check_points(phi, dist)
    return float(
        sum(w * bregman_divergence(phi, t, mu) for t, w in zip(dist.points, dist.weights))
    )


def jensen_gap(phi: ConvexFunctional, dist: DiscreteDistribution) -> float:
    """``E[phi(T)] - phi(E[T])``; equal to :func:`bregman_information`."""
    mu = _check_points(phi, dist)
    expected = sum(w * phi.value(t) for t, w in zip(dist.points, dist.weights))
    return float(expected - phi.value(mu))


def itakura_saito_log_domain(log_p, log_q):
    """Divergence induced by ``-log`` between ``p`` and ``q``, given their logs.

    Evaluates ``(log q - log p) + exp(log p - log q) - 1`` with ``expm1`` so
    neither probability is exponentiated on its own. Works elementwise on
    arrays as well as on floats.
    """
    diff = np.subtract(log_p, log_q)
    return -diff + np.expm1(diff)
