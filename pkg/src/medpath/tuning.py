"""BIC grid search over the penalty weights.

Each cell of the grid is a tuple ``(lambda1, lambda2 / lambda1,
lambda3 / lambda1, c1)``. Two criteria are available:

``literal``
    ``-2 log L + log(n) |A|`` with ``L`` the total least-squares loss.
``gaussian``
    ``n p log(L_M / (n p)) + n log(L_Y / n) + log(n) |A|``, the profile
    Gaussian likelihood of the two regressions.

``|A|`` counts paths with ``|alpha_jk beta_k|`` above ``zero_threshold``.
"""

from __future__ import annotations

import csv
import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .design import Design
from .params import ModelParams
from .penalties import PenaltyWeights
from .solver import FitConfig, FitResult, SolverError, fit

log = logging.getLogger(__name__)

BIC_KINDS = ("literal", "gaussian")
ZERO_THRESHOLD = 1e-8


class BicError(ValueError):
    pass


@dataclass(frozen=True)
class TuningGrid:
    lambda1_values: tuple
    ratio2_values: tuple = (0.0,)
    ratio3_values: tuple = (1.0,)
    c1_values: tuple = (1.0,)
    zero_threshold: float = ZERO_THRESHOLD

    def __post_init__(self):
        for name in ("lambda1_values", "ratio2_values", "ratio3_values", "c1_values"):
            vals = tuple(float(v) for v in np.atleast_1d(getattr(self, name)))
            if not vals:
                raise ValueError(f"{name} is empty")
            if any(not math.isfinite(v) or v < 0 for v in vals):
                raise ValueError(f"{name} must be finite and nonnegative")
            object.__setattr__(self, name, vals)
        if any(v <= 0 for v in self.lambda1_values):
            raise ValueError("lambda1 values must be strictly positive")
        if not self.zero_threshold >= 0:
            raise ValueError("zero_threshold must be nonnegative")

    def __len__(self) -> int:
        return len(self.lambda1_values) * len(self.ratio2_values) * len(self.ratio3_values) * len(self.c1_values)

    def cells(self, c0: float = 2.0, rho: float = 1.0) -> list:
        """All cells as :class:`PenaltyWeights`, in grid order."""
        return [
            PenaltyWeights(lam1, r2 * lam1, r3 * lam1, c0=c0, c1=c1, rho=rho)
            for lam1, r2, r3, c1 in itertools.product(
                self.lambda1_values, self.ratio2_values, self.ratio3_values, self.c1_values
            )
        ]


def lambda_scale(data: Design, loss_scale: str = "mean") -> float:
    """``max |M^T X| / n``, times ``n`` when the loss is a raw sum."""
    scale = float(np.max(np.abs(data.XtM))) / data.n
    if scale <= 0:
        scale = 1.0
    return scale * data.n if loss_scale == "sum" else scale


def default_grid(data: Design, loss_scale: str = "mean") -> TuningGrid:
    """Eight log-spaced lambda1 values over ``[1e-3, 10]`` times the data scale."""
    scale = lambda_scale(data, loss_scale)
    return TuningGrid(
        lambda1_values=tuple(scale * np.logspace(-3, 1, 8)),
        ratio2_values=(0.0, 0.5, 1.0, 2.0),
        ratio3_values=(0.1, 1.0, 10.0),
        c1_values=(0.5, 1.0, 2.0),
    )


def active_set(params: ModelParams, zero_threshold: float = ZERO_THRESHOLD) -> np.ndarray:
    return np.abs(params.products()) > zero_threshold


def compute_bic(
    params: ModelParams,
    loss_m: float,
    loss_y: float,
    n: int,
    zero_threshold: float = ZERO_THRESHOLD,
    kind: str = "literal",
) -> float:
    """BIC of a fitted model from its two residual sums of squares.

    Raises
    ------
    BicError
        If a loss needed by the criterion is not positive. A perfect fit
        makes the literal form undefined; ``kind="gaussian"`` only needs each
        block's loss separately.
    """
    if n < 2:
        raise BicError("n must be at least 2")
    size = int(np.count_nonzero(active_set(params, zero_threshold)))
    if kind == "literal":
        loss = loss_m + loss_y
        if not loss > 0:
            raise BicError("least-squares loss is zero (perfect fit); the literal BIC is undefined, use kind='gaussian'")
        return -2.0 * math.log(loss) + math.log(n) * size
    if kind == "gaussian":
        p = params.alpha.shape[1]
        if not (loss_m > 0 and loss_y > 0):
            raise BicError("a block loss is zero; the Gaussian BIC is undefined")
        return n * p * math.log(loss_m / (n * p)) + n * math.log(loss_y / n) + math.log(n) * size
    raise ValueError(f"kind must be one of {BIC_KINDS}")


@dataclass(frozen=True)
class CellRecord:
    weights: PenaltyWeights
    bic: float
    active_set_size: int
    converged: bool
    objective: float
    iterations: int
    loss_m: float
    loss_y: float
    error: str = ""

    def sort_key(self) -> tuple:
        # smallest BIC, then sparser-leaning weights
        w = self.weights
        ratio2 = w.lambda2 / w.lambda1
        ratio3 = w.lambda3 / w.lambda1
        return (self.bic, -w.lambda1, -ratio2, -ratio3, -w.c1)


@dataclass
class TuningResult:
    records: list
    winner: int
    fit: FitResult
    fallback: bool = False
    bic_kind: str = "literal"
    extra: dict = field(default_factory=dict)

    @property
    def best(self) -> CellRecord:
        return self.records[self.winner]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["cell", "lambda1", "lambda2", "lambda3", "c1", "c0", "rho", "bic",
                        "active_set_size", "converged", "objective", "iterations", "loss_m", "loss_y",
                        "winner", "error"])
            for i, rec in enumerate(self.records):
                wt = rec.weights
                w.writerow([i, repr(wt.lambda1), repr(wt.lambda2), repr(wt.lambda3), repr(wt.c1), repr(wt.c0),
                            repr(wt.rho), repr(rec.bic), rec.active_set_size, int(rec.converged),
                            repr(rec.objective), rec.iterations, repr(rec.loss_m), repr(rec.loss_y),
                            int(i == self.winner), rec.error])


def _record(res: FitResult, weights, n, zero_threshold, kind) -> CellRecord:
    bic = compute_bic(res.params, res.loss_m, res.loss_y, n, zero_threshold, kind)
    size = int(np.count_nonzero(active_set(res.params, zero_threshold)))
    return CellRecord(weights, bic, size, res.converged, res.objective, res.iterations, res.loss_m, res.loss_y)


def _failed(weights, exc) -> CellRecord:
    nan = float("nan")
    return CellRecord(weights, nan, 0, False, nan, 0, nan, nan, error=str(exc))


def _run_chain(task):
    """Fit a list of cells in order, warm-starting each from the previous one."""
    data, cells, config, zero_threshold, kind, warm = task
    out, prev = [], None
    for weights in cells:
        cfg = replace(config, weights=weights, init=prev if warm else config.init)
        try:
            res = fit(data, cfg)
        except SolverError as exc:
            out.append((_failed(weights, exc), None))
            prev = None
            continue
        out.append((_record(res, weights, data.n, zero_threshold, kind), res))
        prev = res.params
    return out


def grid_search(
    data: Design,
    grid: TuningGrid,
    config: FitConfig = FitConfig(),
    bic: str = "literal",
    threads: int = 1,
    warm_start: bool = False,
) -> TuningResult:
    """Fit every grid cell and keep the one with the smallest BIC.

    Cells that did not converge are excluded from the comparison unless
    no cell converged, in which case the lowest objective wins and
    ``fallback`` is set. Ties are broken by weight values (larger lambda1,
    then larger ratios, then larger c1), never by grid position.

    With ``warm_start`` each ``(ratio2, ratio3, c1)`` path is fitted from the
    largest lambda1 down, starting every cell from its neighbour; the winner is
    then refitted from zeros so the returned fit does not depend on the path.
    Parallel workers (``threads > 1``) only change the schedule, never the
    results.
    """
    if bic not in BIC_KINDS:
        raise ValueError(f"bic must be one of {BIC_KINDS}")
    if len(grid) == 0:
        raise ValueError("empty grid")
    base = config.weights
    cells = grid.cells(c0=base.c0, rho=base.rho)
    if warm_start:
        chains: dict = {}
        for w in cells:
            chains.setdefault((w.lambda2 / w.lambda1, w.lambda3 / w.lambda1, w.c1), []).append(w)
        groups = [sorted(ch, key=lambda w: -w.lambda1) for ch in chains.values()]
    else:
        groups = [[w] for w in cells]
    tasks = [(data, g, config, grid.zero_threshold, bic, warm_start) for g in groups]
    if threads > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_run_chain, tasks, chunksize=max(1, len(tasks) // (4 * threads))))
    else:
        results = [_run_chain(t) for t in tasks]
    by_weights = {rec.weights: (rec, res) for chunk in results for rec, res in chunk}
    records = [by_weights[w][0] for w in cells]

    usable = [i for i, rec in enumerate(records) if rec.converged]
    fallback = False
    if usable:
        winner = min(usable, key=lambda i: records[i].sort_key())
    else:
        finite = [i for i, rec in enumerate(records) if math.isfinite(rec.objective)]
        if not finite:
            raise SolverError("every grid cell failed: " + records[0].error)
        fallback = True
        winner = min(finite, key=lambda i: (records[i].objective,) + records[i].sort_key()[1:])
        log.warning("no grid cell converged; selecting the lowest objective", extra={"event": "grid_fallback"})
    final = by_weights[records[winner].weights][1]
    if warm_start:
        # reported fit must not depend on the warm-start path
        final = fit(data, replace(config, weights=records[winner].weights))
    return TuningResult(records, winner, final, fallback, bic)
