"""Path-coefficient container shared by the solver, tuning and effects code."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ModelParams:
    """Coefficients of the two-equation mediation model.

    ``alpha`` (q, p) maps composite exposures to mediators, ``beta`` (p,)
    maps mediators to the outcome and ``gamma`` (q,) holds the direct
    exposure-to-outcome paths.
    """

    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        alpha = np.array(self.alpha, dtype=float, ndmin=2)
        beta = np.array(self.beta, dtype=float).reshape(-1)
        gamma = np.array(self.gamma, dtype=float).reshape(-1)
        q, p = alpha.shape
        if beta.shape != (p,) or gamma.shape != (q,):
            raise ValueError(
                f"inconsistent shapes: alpha {alpha.shape}, beta {beta.shape}, gamma {gamma.shape}"
            )
        if not (np.all(np.isfinite(alpha)) and np.all(np.isfinite(beta)) and np.all(np.isfinite(gamma))):
            raise ValueError("path coefficients must be finite")
        for arr in (alpha, beta, gamma):
            arr.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "gamma", gamma)

    @property
    def shape(self) -> tuple[int, int]:
        return self.alpha.shape

    @classmethod
    def _trusted(cls, alpha, beta, gamma) -> "ModelParams":
        # solver hot loop: arrays already validated float ndarrays
        obj = cls.__new__(cls)
        object.__setattr__(obj, "alpha", alpha)
        object.__setattr__(obj, "beta", beta)
        object.__setattr__(obj, "gamma", gamma)
        return obj

    @classmethod
    def zeros(cls, q: int, p: int) -> "ModelParams":
        return cls(np.zeros((q, p)), np.zeros(p), np.zeros(q))

    def products(self) -> np.ndarray:
        """Per-path indirect effects ``alpha[j, k] * beta[k]``."""
        return self.alpha * self.beta

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha.tolist(),
            "beta": self.beta.tolist(),
            "gamma": self.gamma.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        alpha = np.asarray(d["alpha"], dtype=float)
        if alpha.ndim == 1:
            alpha = alpha.reshape(len(d["gamma"]), len(d["beta"]))
        return cls(alpha, d["beta"], d["gamma"])
