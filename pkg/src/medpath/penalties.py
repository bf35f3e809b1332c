"""Penalty functions of the penalized least-squares objective.

The objective minimized over ``(alpha, beta, gamma)`` is::

    0.5 * L + lambda1 * R1(alpha, beta) + lambda2 * R2(alpha, beta) + lambda3 * R3(gamma)

where ``L`` is the summed squared residual of both regressions,

* ``R1`` is the pathway lasso term
  ``sum_jk |a_jk b_k| + c0 (a_jk^2 + b_k^2)`` plus ``c1 (|a|_1 + |b|_1)``,
* ``R2`` is the exposure-wise group norm ``sum_j sqrt(p) ||a_j o b||_2``,
* ``R3`` is the lasso on the direct effects.

``|ab| + c0 (a^2 + b^2)`` is jointly convex exactly when ``c0 >= 1/2``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .design import Design
from .params import ModelParams

C0_FLOOR = 0.5


@dataclass(frozen=True)
class PenaltyWeights:
    lambda1: float = 0.0
    lambda2: float = 0.0
    lambda3: float = 0.0
    c0: float = 2.0
    c1: float = 0.0
    rho: float = 1.0

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "lambda3", "c0", "c1", "rho"):
            value = float(getattr(self, name))
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and nonnegative, got {value}")
            object.__setattr__(self, name, value)
        if self.c0 < C0_FLOOR:
            raise ValueError(f"c0 must be >= {C0_FLOOR} for a convex pathway penalty, got {self.c0}")
        if self.rho <= 0:
            raise ValueError(f"rho must be strictly positive, got {self.rho}")

    def to_dict(self) -> dict:
        return asdict(self)


def soft_threshold(a, lam):
    """Elementwise ``sign(a) * max(|a| - lam, 0)``; scalars in, scalars out."""
    if np.any(np.asarray(lam) < 0):
        raise ValueError("threshold must be nonnegative")
    out = np.sign(a) * np.maximum(np.abs(a) - lam, 0.0)
    if np.ndim(out) == 0:
        return float(out)
    return out


def eval_r1(alpha, beta, weights: PenaltyWeights) -> float:
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    q = alpha.shape[0]
    path = np.sum(np.abs(alpha * beta)) + weights.c0 * (np.sum(alpha * alpha) + q * np.sum(beta * beta))
    lasso = np.sum(np.abs(alpha)) + np.sum(np.abs(beta))
    return float(path + weights.c1 * lasso)


def eval_r2(alpha, beta) -> float:
    prod = np.asarray(alpha, dtype=float) * np.asarray(beta, dtype=float)
    p = prod.shape[1]
    return float(math.sqrt(p) * np.sum(np.sqrt(np.sum(prod * prod, axis=1))))


def eval_r3(gamma) -> float:
    return float(np.sum(np.abs(np.asarray(gamma, dtype=float))))


def penalty_value(alpha, beta, gamma, weights: PenaltyWeights) -> float:
    """``lambda1 R1 + lambda2 R2 + lambda3 R3``; zero-weight terms are skipped."""
    total = weights.lambda1 * eval_r1(alpha, beta, weights)
    if weights.lambda2:
        total += weights.lambda2 * eval_r2(alpha, beta)
    if weights.lambda3:
        total += weights.lambda3 * eval_r3(gamma)
    return total


def eval_objective(params: ModelParams, data: Design, weights: PenaltyWeights) -> float:
    """Penalized objective ``0.5 L + lambda1 R1 + lambda2 R2 + lambda3 R3``."""
    lm, ly = data.loss_parts(params.alpha, params.beta, params.gamma)
    return 0.5 * (lm + ly) + penalty_value(params.alpha, params.beta, params.gamma, weights)
