"""Synthetic mediation studies with a planted sparse path structure.

Exposures are drawn from ``N(0, U diag(lam) U^T)`` with an exponentially
decaying spectrum ``lam_k = lambda_max * decay_rate**(k - 1)`` and a seeded
random orthogonal ``U``. The planted model lives on the first ``q_true``
sample principal-component scores, where ``q_true`` is the number of
population components needed to reach ``variance_threshold``::

    M = S alpha + eps,    Y = S gamma + M beta + eta

``round(sparsity * q_true * p)`` entries of ``alpha`` are nonzero; ``beta``
is nonzero on every mediator that receives one of them, so each planted
``alpha_jk beta_k`` is a genuine path.

Every random draw comes from its own named stream of the seed. The planted
coefficients do not depend on ``n``, and the exposure and noise streams are
drawn row by row, so a larger sample extends a smaller one with the same
seed.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.stats import ortho_group

from .dataset import RawDataset, residualize
from .design import Design
from .effects import decompose
from .params import ModelParams
from .pca import fit_pca, transform
from .solver import FitConfig
from .tuning import ZERO_THRESHOLD, TuningGrid, grid_search, lambda_scale

log = logging.getLogger(__name__)

STREAMS = {
    "orthogonal": 0,
    "exposure": 1,
    "placement": 2,
    "signs": 3,
    "mediator_noise": 4,
    "outcome_noise": 5,
    "replicates": 6,
}


def stream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for the named sub-stream of ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(STREAMS[name],)))


@dataclass(frozen=True)
class SimSpec:
    n: int = 100
    r: int = 100
    p: int = 100
    decay_rate: float = 0.75
    lambda_max: float = 10.0
    variance_threshold: float = 0.80
    sparsity: float = 0.05
    effect_scale: float = 1.0
    noise_sd_mediator: float = 1.0
    noise_sd_outcome: float = 1.0
    direct_fraction: float = 0.4
    seed: int = 0

    def __post_init__(self):
        if min(self.r, self.p) < 1 or self.n < 2:
            raise ValueError("need n >= 2 and r, p >= 1")
        if not 0 < self.decay_rate < 1:
            raise ValueError("decay_rate must lie in (0, 1)")
        if not 0 < self.sparsity <= 1:
            raise ValueError("sparsity must lie in (0, 1]")
        if not 0 < self.variance_threshold <= 1:
            raise ValueError("variance_threshold must lie in (0, 1]")
        if not 0 <= self.direct_fraction <= 1:
            raise ValueError("direct_fraction must lie in [0, 1]")
        for name in ("lambda_max", "effect_scale", "noise_sd_mediator", "noise_sd_outcome"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.lambda_max * self.decay_rate ** np.arange(self.r)

    @property
    def q_true(self) -> int:
        lam = self.eigenvalues
        cum = np.cumsum(lam) / lam.sum()
        return int(np.searchsorted(cum, self.variance_threshold - 1e-12) + 1)

    @property
    def n_planted(self) -> int:
        return int(round(self.sparsity * self.q_true * self.p))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SimTruth:
    """Planted coefficients on the raw (unwhitened) score scale."""

    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        params = ModelParams(self.alpha, self.beta, self.gamma)
        object.__setattr__(self, "alpha", params.alpha)
        object.__setattr__(self, "beta", params.beta)
        object.__setattr__(self, "gamma", params.gamma)

    @property
    def q_true(self) -> int:
        return self.alpha.shape[0]

    @property
    def products(self) -> np.ndarray:
        return self.alpha * self.beta

    @property
    def active(self) -> np.ndarray:
        return self.products != 0

    @property
    def ie_total(self) -> np.ndarray:
        return self.products.sum(axis=1)

    @property
    def de(self) -> np.ndarray:
        return self.gamma

    @property
    def te(self) -> np.ndarray:
        return self.ie_total + self.gamma

    def to_dict(self) -> dict:
        return {"alpha": self.alpha.tolist(), "beta": self.beta.tolist(), "gamma": self.gamma.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "SimTruth":
        return cls(np.asarray(d["alpha"], dtype=float).reshape(len(d["gamma"]), -1), d["beta"], d["gamma"])


def plant_effects(spec: SimSpec) -> SimTruth:
    """Draw the sparse planted coefficients; independent of ``spec.n``."""
    q, p = spec.q_true, spec.p
    k = spec.n_planted
    if k < 1:
        raise ValueError(f"sparsity {spec.sparsity} plants no path on a {q}x{p} grid")
    place = stream(spec.seed, "placement")
    signs = stream(spec.seed, "signs")
    alpha = np.zeros((q, p))
    idx = place.choice(q * p, size=k, replace=False)
    alpha.flat[idx] = spec.effect_scale * signs.choice([-1.0, 1.0], size=k)
    touched = np.unique(idx % p)
    beta = np.zeros(p)
    beta[touched] = spec.effect_scale * signs.choice([-1.0, 1.0], size=touched.size)
    gamma = np.zeros(q)
    n_direct = int(round(spec.direct_fraction * q))
    if n_direct:
        gidx = place.choice(q, size=n_direct, replace=False)
        gamma[gidx] = spec.effect_scale * signs.choice([-1.0, 1.0], size=n_direct)
    return SimTruth(alpha, beta, gamma)


def draw_exposures(spec: SimSpec) -> np.ndarray:
    lam = spec.eigenvalues
    if spec.r == 1:
        U = np.ones((1, 1))
    else:
        U = ortho_group.rvs(spec.r, random_state=stream(spec.seed, "orthogonal"))
    Z = stream(spec.seed, "exposure").standard_normal((spec.n, spec.r))
    return (Z * np.sqrt(lam)) @ U.T


def simulate_responses(scores, truth: SimTruth, noise_m, noise_y) -> tuple[np.ndarray, np.ndarray]:
    """``M = S alpha + noise_m`` and ``Y = S gamma + M beta + noise_y``."""
    M = scores @ truth.alpha + noise_m
    Y = scores @ truth.gamma + M @ truth.beta + noise_y
    return M, Y


def generate(spec: SimSpec) -> tuple[RawDataset, SimTruth]:
    """One synthetic dataset and its planted truth."""
    truth = plant_effects(spec)
    X = draw_exposures(spec)
    model = fit_pca(X, n_components=None, threshold=spec.variance_threshold)
    if model.k < truth.q_true:
        raise ValueError(f"n={spec.n} supports only {model.k} components, {truth.q_true} are planted")
    scores = transform(model.with_q(truth.q_true), X)
    noise_m = spec.noise_sd_mediator * stream(spec.seed, "mediator_noise").standard_normal((spec.n, spec.p))
    noise_y = spec.noise_sd_outcome * stream(spec.seed, "outcome_noise").standard_normal(spec.n)
    M, Y = simulate_responses(scores, truth, noise_m, noise_y)
    data = RawDataset(
        X, M, Y, None,
        exposure_names=tuple(f"x{i + 1}" for i in range(spec.r)),
        mediator_names=tuple(f"m{k + 1}" for k in range(spec.p)),
        outcome_name="y",
    )
    return data, truth


@dataclass(frozen=True)
class ReplicateScore:
    sensitivity: float
    specificity: float
    total_ie_error: float
    pc_ie_error: np.ndarray
    q_selected: int


def _pad(a: np.ndarray, rows: int) -> np.ndarray:
    out = np.zeros((rows,) + a.shape[1:])
    out[: a.shape[0]] = a
    return out


def score(params: ModelParams, truth: SimTruth, zero_threshold: float = ZERO_THRESHOLD) -> ReplicateScore:
    """Selection and estimation accuracy of one fit against the planted truth.

    Fitted and planted components are aligned by index; whichever side has
    fewer components is padded with zero rows. ``pc_ie_error`` covers the
    planted components.
    """
    if params.alpha.shape[1] != truth.alpha.shape[1]:
        raise ValueError(f"fit has {params.alpha.shape[1]} mediators, truth has {truth.alpha.shape[1]}")
    rows = max(params.alpha.shape[0], truth.q_true)
    est = _pad(params.products(), rows)
    true = _pad(truth.products, rows)
    sel = np.abs(est) > zero_threshold
    act = true != 0
    tp = np.sum(sel & act)
    tn = np.sum(~sel & ~act)
    sens = tp / act.sum() if act.any() else float("nan")
    spec = tn / (~act).sum() if (~act).any() else float("nan")
    pc_err = est.sum(axis=1)[: truth.q_true] - true.sum(axis=1)[: truth.q_true]
    return ReplicateScore(float(sens), float(spec), float(est.sum() - true.sum()), pc_err, params.alpha.shape[0])


@dataclass(frozen=True)
class SimMetrics:
    n_reps: int
    bias_total_ie: float
    mse_total_ie: float
    bias_pc_ie: np.ndarray
    mse_pc_ie: np.ndarray
    sensitivity: float
    specificity: float
    sensitivity_se: float
    specificity_se: float
    q_mean: float
    q_sd: float
    q_se: float

    @classmethod
    def aggregate(cls, scores: list) -> "SimMetrics":
        if not scores:
            raise ValueError("no replicate to aggregate")
        tot = np.array([s.total_ie_error for s in scores])
        pc = np.array([s.pc_ie_error for s in scores])
        sens = np.array([s.sensitivity for s in scores])
        spec = np.array([s.specificity for s in scores])
        q = np.array([s.q_selected for s in scores], dtype=float)
        R = len(scores)

        def se(x):
            return float(x.std(ddof=1) / math.sqrt(R)) if R > 1 else 0.0

        q_sd = float(q.std(ddof=1)) if R > 1 else 0.0
        return cls(R, float(tot.mean()), float(np.mean(tot * tot)), pc.mean(axis=0), np.mean(pc * pc, axis=0),
                   float(sens.mean()), float(spec.mean()), se(sens), se(spec), float(q.mean()), q_sd, se(q))


def simulation_grid(data: Design, loss_scale: str = "mean") -> TuningGrid:
    """Grid used by the simulation harness.

    Small ``lambda1`` keeps the ridge part of the pathway penalty light while
    large ``c1`` puts the lasso threshold ``lambda1 * c1`` where noise paths
    are removed.
    """
    scale = lambda_scale(data, loss_scale)
    return TuningGrid(
        lambda1_values=tuple(scale * np.logspace(-5, -1, 9)),
        ratio2_values=(0.0, 0.5),
        ratio3_values=(1.0,),
        c1_values=(10.0, 30.0, 100.0, 300.0),
    )


@dataclass(frozen=True)
class SimSettings:
    """Estimation pipeline applied to every replicate."""

    bic: str = "gaussian"
    whiten: bool = False
    zero_threshold: float = ZERO_THRESHOLD
    fit_config: FitConfig = FitConfig()
    grid: TuningGrid | None = None


def replicate_seed(master: int, index: int) -> int:
    return int(np.random.SeedSequence(master, spawn_key=(STREAMS["replicates"], index)).generate_state(1)[0])


def run_one(spec: SimSpec, settings: SimSettings = SimSettings()) -> tuple[ReplicateScore, dict]:
    """generate, adjust, compress, tune and score one dataset."""
    data, truth = generate(spec)
    adj = residualize(data)
    model = fit_pca(adj.X, threshold=spec.variance_threshold, whiten=settings.whiten)
    design = Design(transform(model, adj.X), adj.M, adj.Y)
    grid = settings.grid if settings.grid is not None else simulation_grid(design, settings.fit_config.loss_scale)
    grid = replace(grid, zero_threshold=settings.zero_threshold)
    tuned = grid_search(design, grid, settings.fit_config, bic=settings.bic)
    report = decompose(tuned.fit.params, zero_threshold=settings.zero_threshold, score_scale=model.score_scale)
    est = ModelParams(report.alpha, report.beta, report.gamma)
    s = score(est, truth, settings.zero_threshold)
    w = tuned.best.weights
    info = {
        "lambda1": w.lambda1, "lambda2": w.lambda2, "lambda3": w.lambda3, "c1": w.c1,
        "converged": tuned.fit.converged, "fallback": tuned.fallback,
        "total_ie_true": float(truth.products.sum()),
    }
    return s, info


def _replicate_task(args):
    spec, settings, index = args
    try:
        s, info = run_one(spec, settings)
    except Exception as exc:  # recorded per replicate, fatal only if all fail
        return index, None, {"error": f"{type(exc).__name__}: {exc}"}
    return index, s, info


@dataclass
class SimRun:
    spec: SimSpec
    metrics: SimMetrics
    rows: list = field(default_factory=list)


def run_replicates(
    spec: SimSpec,
    n_reps: int,
    settings: SimSettings = SimSettings(),
    threads: int = 1,
) -> SimRun:
    """Independent replicates seeded from ``spec.seed``; rows sorted by index."""
    if n_reps < 1:
        raise ValueError("n_reps must be at least 1")
    tasks = [(replace(spec, seed=replicate_seed(spec.seed, i)), settings, i) for i in range(n_reps)]
    if threads > 1 and n_reps > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            out = list(pool.map(_replicate_task, tasks))
    else:
        out = [_replicate_task(t) for t in tasks]
    out.sort(key=lambda t: t[0])
    rows, scores = [], []
    for (index, s, info), (rspec, _, _) in zip(out, tasks):
        row = {"n": spec.n, "replicate": index, "seed": rspec.seed}
        if s is None:
            log.warning("replicate %d failed: %s", index, info["error"], extra={"event": "replicate_failed"})
            row.update(info)
        else:
            scores.append(s)
            row.update({
                "q_selected": s.q_selected, "q_true": spec.q_true,
                "sensitivity": s.sensitivity, "specificity": s.specificity,
                "total_ie_error": s.total_ie_error, **info,
            })
        rows.append(row)
    if not scores:
        raise RuntimeError(f"all {n_reps} replicates failed; first error: {rows[0]['error']}")
    return SimRun(spec, SimMetrics.aggregate(scores), rows)


REPLICATE_COLUMNS = ("n", "replicate", "seed", "q_selected", "q_true", "sensitivity", "specificity",
                     "total_ie_error", "total_ie_true", "lambda1", "lambda2", "lambda3", "c1",
                     "converged", "fallback", "error")


def write_replicates(runs: list, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=REPLICATE_COLUMNS, lineterminator="\n", restval="")
        w.writeheader()
        for run in runs:
            for row in run.rows:
                w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def estimation_table(runs: list, truth: SimTruth) -> list:
    """Rows ``[quantity, truth, bias@n..., mse@n...]`` for total and per-PC IE."""
    header = ["quantity", "truth"] + [f"bias_n{r.spec.n}" for r in runs] + [f"mse_n{r.spec.n}" for r in runs]
    rows = [header, ["Total IE", float(truth.products.sum())]
            + [r.metrics.bias_total_ie for r in runs] + [r.metrics.mse_total_ie for r in runs]]
    for j in range(truth.q_true):
        rows.append([f"IE PC{j + 1}", float(truth.ie_total[j])]
                    + [float(r.metrics.bias_pc_ie[j]) for r in runs]
                    + [float(r.metrics.mse_pc_ie[j]) for r in runs])
    return rows


def selection_table(runs: list) -> list:
    """Rows of sensitivity, specificity and selected ``q`` (with its SD) per ``n``."""
    rows = [["metric"] + [f"n{r.spec.n}" for r in runs]]
    rows.append(["Sensitivity"] + [r.metrics.sensitivity for r in runs])
    rows.append(["Specificity"] + [r.metrics.specificity for r in runs])
    rows.append(["# PC mean"] + [r.metrics.q_mean for r in runs])
    rows.append(["# PC sd"] + [r.metrics.q_sd for r in runs])
    return rows


def write_table(rows: list, path, precision: int | None = 4) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in rows:
            w.writerow([(repr(v) if precision is None else f"{v:.{precision}g}") if isinstance(v, float) else v
                        for v in row])
