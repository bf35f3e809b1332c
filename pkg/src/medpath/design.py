"""Model matrices for the exposure -> mediator -> outcome regressions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Design:
    """Composite exposures ``X`` (n, q), mediators ``M`` (n, p), outcome ``Y`` (n,).

    Cross products are computed once on construction; the solver only ever
    touches these Gram blocks, so an iteration costs O(p^2 + qp) regardless
    of ``n``.
    """

    X: np.ndarray
    M: np.ndarray
    Y: np.ndarray
    XtX: np.ndarray = field(init=False, repr=False)
    XtM: np.ndarray = field(init=False, repr=False)
    MtM: np.ndarray = field(init=False, repr=False)
    XtY: np.ndarray = field(init=False, repr=False)
    MtY: np.ndarray = field(init=False, repr=False)
    YtY: float = field(init=False, repr=False)
    trMtM: float = field(init=False, repr=False)

    def __post_init__(self):
        X = np.array(self.X, dtype=float, ndmin=2)
        M = np.array(self.M, dtype=float, ndmin=2)
        Y = np.array(self.Y, dtype=float).reshape(-1)
        if X.shape[0] != M.shape[0] or X.shape[0] != Y.shape[0]:
            raise ValueError(f"row counts differ: X {X.shape}, M {M.shape}, Y {Y.shape}")
        for name, arr in (("X", X), ("M", M), ("Y", Y)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite entries")
            arr.setflags(write=False)
        set_ = object.__setattr__
        set_(self, "X", X)
        set_(self, "M", M)
        set_(self, "Y", Y)
        set_(self, "XtX", X.T @ X)
        set_(self, "XtM", X.T @ M)
        set_(self, "MtM", M.T @ M)
        set_(self, "XtY", X.T @ Y)
        set_(self, "MtY", M.T @ Y)
        set_(self, "YtY", float(Y @ Y))
        set_(self, "trMtM", float(np.sum(M * M)))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def q(self) -> int:
        return self.X.shape[1]

    @property
    def p(self) -> int:
        return self.M.shape[1]

    def scaled(self, factor: float) -> "Design":
        """Same design with every block multiplied by ``factor``."""
        return Design(self.X * factor, self.M * factor, self.Y * factor)

    def loss_parts(self, alpha, beta, gamma) -> tuple[float, float]:
        """Residual sums of squares of the mediator and outcome equations."""
        rm = self.M - self.X @ alpha
        ry = self.Y - self.X @ gamma - self.M @ beta
        return float(np.sum(rm * rm)), float(ry @ ry)

    def gram_loss_parts(self, alpha, beta, gamma) -> tuple[float, float]:
        """``loss_parts`` from the cached cross products (no pass over n)."""
        lm = self.trMtM - 2.0 * np.sum(alpha * self.XtM) + np.sum(alpha * (self.XtX @ alpha))
        ly = (
            self.YtY
            - 2.0 * (gamma @ self.XtY)
            - 2.0 * (beta @ self.MtY)
            + gamma @ self.XtX @ gamma
            + 2.0 * (gamma @ self.XtM @ beta)
            + beta @ self.MtM @ beta
        )
        return float(lm), float(ly)
