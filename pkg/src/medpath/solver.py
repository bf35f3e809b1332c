"""Augmented-Lagrangian solver for the penalized path model.

The product constraint ``mu[j, k] = alpha[j, k] * beta[k]`` turns the
pathway and group penalties into a sparse group lasso on ``mu``. Each sweep
applies five closed-form updates in a fixed order::

    mu    <- sparse-group shrinkage of (alpha o beta - tau / rho)
    alpha <- V_j^{-1} S(w_j, lambda1 c1)            (rows updated Jacobi-style)
    beta  <- V_beta^{-1} S(w_beta, lambda1 c1)       (dense SPD solve)
    gamma <- V_gamma^{-1} S(w_gamma, lambda3)        (V_gamma diagonal for PCA scores)
    tau   <- tau + rho (mu - alpha o beta)

and the loop stops once two consecutive penalized objectives differ by less
than ``tol`` while the constraint residual ``max |mu - alpha o beta|`` is
below ``constraint_tol``.

By default the loss is taken per observation (every block divided by
``sqrt(n)``) so that ``rho = 1`` and ``tol = 1e-6`` mean the same thing at
any sample size; the coefficients are unaffected by that rescaling, only the
meaning of the lambdas is. ``loss_scale="sum"`` uses the raw sums of squares.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg

from .design import Design
from .params import ModelParams
from .penalties import PenaltyWeights, penalty_value, soft_threshold

log = logging.getLogger(__name__)

LOSS_SCALES = ("mean", "sum")
BETA_STEPS = ("exact", "closed_form")


class SolverError(RuntimeError):
    pass


@dataclass
class AdmmState:
    mu: np.ndarray
    tau: np.ndarray
    iteration: int = 0
    objective_trace: list = field(default_factory=list)

    @classmethod
    def zeros(cls, q: int, p: int) -> "AdmmState":
        return cls(np.zeros((q, p)), np.zeros((q, p)))

    def constraint_residual(self, params: ModelParams) -> float:
        return float(np.max(np.abs(self.mu - params.alpha * params.beta), initial=0.0))


@dataclass(frozen=True)
class FitConfig:
    weights: PenaltyWeights = PenaltyWeights()
    tol: float = 1e-6
    max_iter: int = 10000
    constraint_tol: float = 1e-5
    loss_scale: str = "mean"
    beta_step: str = "exact"
    init: ModelParams | None = None

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if not self.constraint_tol > 0:
            raise ValueError("constraint_tol must be positive")
        if self.loss_scale not in LOSS_SCALES:
            raise ValueError(f"loss_scale must be one of {LOSS_SCALES}")
        if self.beta_step not in BETA_STEPS:
            raise ValueError(f"beta_step must be one of {BETA_STEPS}")

    def with_weights(self, weights: PenaltyWeights) -> "FitConfig":
        return replace(self, weights=weights)

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.to_dict(),
            "tol": self.tol,
            "max_iter": self.max_iter,
            "constraint_tol": self.constraint_tol,
            "loss_scale": self.loss_scale,
            "beta_step": self.beta_step,
            "init": "zeros" if self.init is None else "warm",
        }


@dataclass
class FitResult:
    params: ModelParams
    state: AdmmState
    converged: bool
    objective: float
    loss_m: float
    loss_y: float

    @property
    def iterations(self) -> int:
        return self.state.iteration

    @property
    def loss(self) -> float:
        return self.loss_m + self.loss_y

    def __iter__(self):
        # allows ``params, state, converged = fit(...)``
        return iter((self.params, self.state, self.converged))


def update_mu(state: AdmmState, params: ModelParams, weights: PenaltyWeights) -> np.ndarray:
    rho = weights.rho
    p = params.alpha.shape[1]
    nu = params.alpha * params.beta - state.tau / rho
    shrunk = soft_threshold(nu, weights.lambda1 / rho)
    norms = np.sqrt(np.sum(shrunk * shrunk, axis=1))
    group = weights.lambda2 * math.sqrt(p) / rho
    factor = np.zeros_like(norms)
    nz = norms > 0
    factor[nz] = np.maximum(norms[nz] - group, 0.0) / norms[nz]
    return shrunk * factor[:, None]


def update_alpha(state: AdmmState, params: ModelParams, data: Design, weights: PenaltyWeights) -> np.ndarray:
    rho, lam1 = weights.rho, weights.lambda1
    alpha, beta = params.alpha, params.beta
    xx = np.diag(data.XtX)
    # (M - sum_{l != j} x_l alpha_l^T)^T x_j, all rows from the current iterate
    cross = data.XtX @ alpha - xx[:, None] * alpha
    w = data.XtM - cross + beta * state.tau + rho * beta * state.mu
    v = rho * beta * beta + (2.0 * weights.c0 * lam1 + xx)[:, None]
    return soft_threshold(w, lam1 * weights.c1) / v


def _beta_system(state: AdmmState, params: ModelParams, data: Design, weights: PenaltyWeights):
    rho, lam1 = weights.rho, weights.lambda1
    alpha = params.alpha
    q = alpha.shape[0]
    v = data.MtM.copy()
    v[np.diag_indices_from(v)] += rho * np.sum(alpha * alpha, axis=0) + 2.0 * weights.c0 * lam1 * q
    w = data.MtY - data.XtM.T @ params.gamma + np.sum(alpha * state.tau, axis=0) + rho * np.sum(alpha * state.mu, axis=0)
    return v, w


def _cholesky(v):
    msg = "beta system is singular (rank-deficient mediators with lambda1 = 0); use a positive lambda1"
    try:
        factor = linalg.cho_factor(v, lower=False, check_finite=False)
    except linalg.LinAlgError as exc:
        raise SolverError(msg) from exc
    d = np.abs(np.diag(factor[0]))
    # exact singularity can survive factorization as a rounding-level pivot
    if d.min() <= math.sqrt(v.shape[0] * np.finfo(float).eps) * d.max():
        raise SolverError(msg)
    return factor


def update_beta(state: AdmmState, params: ModelParams, data: Design, weights: PenaltyWeights) -> np.ndarray:
    """Closed-form step ``V_beta^{-1} S(w_beta, lambda1 c1)``.

    This minimizes the beta subproblem only when ``V_beta`` is diagonal;
    :func:`update_beta_exact` solves it for any ``V_beta``.
    """
    v, w = _beta_system(state, params, data, weights)
    rhs = soft_threshold(w, weights.lambda1 * weights.c1)
    return linalg.cho_solve(_cholesky(v), rhs, check_finite=False)


def lasso_qp(v: np.ndarray, w: np.ndarray, t: float, x0: np.ndarray | None = None, max_steps: int | None = None) -> np.ndarray:
    """``argmin 0.5 x'Vx - w'x + t |x|_1`` for symmetric positive definite ``V``.

    Feature-sign search: grow the active set one violating coordinate at a
    time, solve the sign-fixed system on it, and line-search back to the
    first zero crossing when signs flip. Every step lowers the objective, so
    the search ends after finitely many steps at the exact minimizer.
    """
    p = w.size
    if t == 0:
        return linalg.cho_solve(_cholesky(v), w, check_finite=False)
    x = np.zeros(p) if x0 is None else np.array(x0, dtype=float)
    theta = np.sign(x)
    tol = 1e-12 * (t + float(np.max(np.abs(w), initial=0.0)))

    def objective(z):
        return 0.5 * z @ v @ z - w @ z + t * np.sum(np.abs(z))

    grad = v @ x - w
    for _ in range(max_steps or 20 * p + 20):
        active = theta != 0
        if np.all(np.abs(grad[active] + t * theta[active]) <= tol):
            slack = np.where(active, -np.inf, np.abs(grad) - t)
            i = int(np.argmax(slack))
            if slack[i] <= tol:
                return x
            theta[i] = -np.sign(grad[i])
            active[i] = True
        idx = np.nonzero(active)[0]
        sub = v[np.ix_(idx, idx)]
        target = linalg.cho_solve(_cholesky(sub), w[idx] - t * theta[idx], check_finite=False)
        cur = x[idx]
        flips = np.nonzero((np.sign(target) != theta[idx]) & (cur != 0))[0]
        best = target
        if flips.size:
            # zero crossings on the segment from cur to target
            steps = cur[flips] / (cur[flips] - target[flips])
            cands = [target] + [cur + s * (target - cur) for s in steps]
            for c, f in zip(cands[1:], flips):
                c[f] = 0.0
            vals = []
            for c in cands:
                z = x.copy()
                z[idx] = c
                vals.append(objective(z))
            best = cands[int(np.argmin(vals))]
        x = x.copy()
        x[idx] = best
        x[np.abs(x) <= 1e-300] = 0.0
        theta = np.sign(x)
        grad = v @ x - w
    log.warning("lasso subproblem hit its step cap", extra={"event": "lasso_cap"})
    return x


def update_beta_exact(state: AdmmState, params: ModelParams, data: Design, weights: PenaltyWeights) -> np.ndarray:
    """Exact minimizer of the beta subproblem, warm-started at the current beta."""
    v, w = _beta_system(state, params, data, weights)
    return lasso_qp(v, w, weights.lambda1 * weights.c1, x0=params.beta)


def update_gamma(state: AdmmState, params: ModelParams, data: Design, weights: PenaltyWeights) -> np.ndarray:
    xx = np.diag(data.XtX)
    if np.any(xx <= 0):
        raise SolverError("exposure score column with zero variance")
    w = data.XtY - data.XtM @ params.beta
    shrunk = soft_threshold(w, weights.lambda3)
    if data.q == 1 or np.allclose(data.XtX, np.diag(xx), rtol=0, atol=1e-10 * xx.max()):
        return shrunk / xx
    return np.linalg.solve(data.XtX, shrunk)


def update_tau(state: AdmmState, params: ModelParams, weights: PenaltyWeights) -> np.ndarray:
    return state.tau + weights.rho * (state.mu - params.alpha * params.beta)


def _objective(data: Design, alpha, beta, gamma, weights: PenaltyWeights) -> float:
    lm, ly = data.gram_loss_parts(alpha, beta, gamma)
    return 0.5 * (lm + ly) + penalty_value(alpha, beta, gamma, weights)


def _check_inputs(data: Design):
    # covers the lambda1 = 0 case of V_j as well: V_gamma needs every column anyway
    if np.any(np.diag(data.XtX) <= 0):
        raise SolverError("exposure score column with zero variance; reduce the number of components")


def fit(data: Design, config: FitConfig = FitConfig()) -> FitResult:
    """Run the alternating updates from ``config.init`` (zeros by default).

    Non-convergence within ``max_iter`` is reported through
    ``FitResult.converged``; the lowest-objective iterate is returned then.
    """
    weights = config.weights
    q, p = data.q, data.p
    work = data.scaled(1.0 / math.sqrt(data.n)) if config.loss_scale == "mean" else data
    _check_inputs(work)
    beta_step = update_beta_exact if config.beta_step == "exact" else update_beta

    if config.init is None:
        params = ModelParams.zeros(q, p)
    else:
        if config.init.shape != (q, p):
            raise ValueError(f"warm start has shape {config.init.shape}, data needs {(q, p)}")
        params = config.init
    alpha, beta, gamma = (np.array(a) for a in (params.alpha, params.beta, params.gamma))
    state = AdmmState(mu=alpha * beta, tau=np.zeros((q, p)))

    obj = _objective(work, alpha, beta, gamma, weights)
    best = (obj, alpha, beta, gamma, state.mu, state.tau, 0)
    converged = False
    trace = []
    for it in range(1, config.max_iter + 1):
        state.mu = update_mu(state, ModelParams._trusted(alpha, beta, gamma), weights)
        alpha = update_alpha(state, ModelParams._trusted(alpha, beta, gamma), work, weights)
        beta = beta_step(state, ModelParams._trusted(alpha, beta, gamma), work, weights)
        gamma = update_gamma(state, ModelParams._trusted(alpha, beta, gamma), work, weights)
        state.tau = update_tau(state, ModelParams._trusted(alpha, beta, gamma), weights)

        new = _objective(work, alpha, beta, gamma, weights)
        if not math.isfinite(new):
            raise SolverError(f"objective became non-finite at iteration {it}")
        trace.append(new)
        if new < best[0]:
            best = (new, alpha, beta, gamma, state.mu, state.tau, it)
        resid = float(np.max(np.abs(state.mu - alpha * beta), initial=0.0))
        if abs(new - obj) < config.tol and resid <= config.constraint_tol:
            converged = True
            obj = new
            break
        obj = new

    if converged:
        final = (obj, alpha, beta, gamma, state.mu, state.tau, it)
    else:
        final = best
        log.warning("solver stopped at max_iter=%d without converging", config.max_iter, extra={"event": "nonconvergence"})
    _, alpha, beta, gamma, mu, tau, _ = final
    out = ModelParams(alpha, beta, gamma)
    state = AdmmState(mu=mu, tau=tau, iteration=it, objective_trace=trace)
    lm, ly = data.loss_parts(alpha, beta, gamma)
    # reported on the scale the weights refer to
    denom = data.n if config.loss_scale == "mean" else 1
    objective = 0.5 * (lm + ly) / denom + penalty_value(alpha, beta, gamma, weights)
    return FitResult(out, state, converged, objective, lm, ly)
