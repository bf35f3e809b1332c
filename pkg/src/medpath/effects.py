"""Direct, indirect and total effects of the composite exposures.

For exposure ``j`` and mediator ``k`` the path effect is
``IE[j, k] = alpha[j, k] * beta[k]``; its sum over mediators is the total
indirect effect, ``gamma[j]`` the direct effect and their sum the total
effect.

When several mediators act in sequence (one region affecting another before
the outcome) the model sees only their joint linear contribution. The effect
reported for such a chain is the consolidated effect of the whole block, not
a decomposition inside it; no attempt is made to order mediators.

Reports can be written as JSON (full precision, round-trips exactly) or as
three CSV tables: a path table with one ``alpha`` and one ``IE`` row per
mediator that carries an active path, a summary with ``IE``, ``DE`` and
``TE`` rows per exposure plus a ``Total`` column, and an edge list for
external plotting.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .params import ModelParams

ZERO_THRESHOLD = 1e-8


def _fmt(x: float, precision: int | None) -> str:
    if precision is None:
        return repr(float(x))
    return f"{x:.{precision}g}"


@dataclass(frozen=True)
class EffectsReport:
    """Effect decomposition of one fit; derived quantities are computed on access."""

    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    exposure_labels: tuple = ()
    mediator_labels: tuple = ()
    zero_threshold: float = ZERO_THRESHOLD

    def __post_init__(self):
        params = ModelParams(self.alpha, self.beta, self.gamma)
        q, p = params.shape
        ex = tuple(self.exposure_labels) or tuple(f"PC{j + 1}" for j in range(q))
        med = tuple(self.mediator_labels) or tuple(f"M{k + 1}" for k in range(p))
        if len(ex) != q or len(med) != p:
            raise ValueError(f"labels ({len(ex)}, {len(med)}) do not match parameter shape {(q, p)}")
        object.__setattr__(self, "alpha", params.alpha)
        object.__setattr__(self, "beta", params.beta)
        object.__setattr__(self, "gamma", params.gamma)
        object.__setattr__(self, "exposure_labels", tuple(str(s) for s in ex))
        object.__setattr__(self, "mediator_labels", tuple(str(s) for s in med))
        object.__setattr__(self, "zero_threshold", float(self.zero_threshold))

    @property
    def ie_matrix(self) -> np.ndarray:
        return self.alpha * self.beta

    @property
    def ie_total(self) -> np.ndarray:
        return self.ie_matrix.sum(axis=1)

    @property
    def de(self) -> np.ndarray:
        return self.gamma

    @property
    def te(self) -> np.ndarray:
        return self.ie_total + self.de

    @property
    def active(self) -> np.ndarray:
        return np.abs(self.ie_matrix) > self.zero_threshold

    @property
    def active_paths(self) -> list:
        """``(j, k, alpha_jk, beta_k, IE_jk)`` for active paths, row-major."""
        ie = self.ie_matrix
        return [
            (int(j), int(k), float(self.alpha[j, k]), float(self.beta[k]), float(ie[j, k]))
            for j, k in zip(*np.nonzero(self.active))
        ]

    def to_dict(self) -> dict:
        return {
            "exposure_labels": list(self.exposure_labels),
            "mediator_labels": list(self.mediator_labels),
            "zero_threshold": self.zero_threshold,
            "alpha": self.alpha.tolist(),
            "beta": self.beta.tolist(),
            "gamma": self.gamma.tolist(),
            "ie_matrix": self.ie_matrix.tolist(),
            "ie_total": self.ie_total.tolist(),
            "de": self.de.tolist(),
            "te": self.te.tolist(),
            "active_paths": [list(t) for t in self.active_paths],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EffectsReport":
        return cls(
            np.asarray(d["alpha"], dtype=float).reshape(len(d["gamma"]), len(d["beta"])),
            d["beta"],
            d["gamma"],
            tuple(d["exposure_labels"]),
            tuple(d["mediator_labels"]),
            d["zero_threshold"],
        )


def decompose(
    params: ModelParams,
    exposure_labels=(),
    mediator_labels=(),
    zero_threshold: float = ZERO_THRESHOLD,
    m_scale=None,
    y_scale: float = 1.0,
    score_scale=None,
) -> EffectsReport:
    """Build an :class:`EffectsReport`, optionally in original units.

    Parameters
    ----------
    params : ModelParams
        Coefficients as fitted.
    m_scale, y_scale : array_like, float, optional
        Standard deviations divided out of the mediators and the outcome
        before fitting. Coefficients are mapped back with
        ``alpha * m_scale``, ``beta * y_scale / m_scale`` and
        ``gamma * y_scale``.
    score_scale : array_like, optional
        Divisors applied to the exposure scores (whitening); ``alpha`` and
        ``gamma`` rows are divided by them.
    """
    alpha, beta, gamma = params.alpha, params.beta, params.gamma
    if m_scale is not None or y_scale != 1.0:
        m = np.ones(beta.shape) if m_scale is None else np.asarray(m_scale, dtype=float)
        alpha = alpha * m
        beta = beta * y_scale / m
        gamma = gamma * y_scale
    if score_scale is not None:
        s = np.asarray(score_scale, dtype=float)
        alpha = alpha / s[:, None]
        gamma = gamma / s
    return EffectsReport(alpha, beta, gamma, tuple(exposure_labels), tuple(mediator_labels), zero_threshold)


def write_json(report: EffectsReport, path) -> None:
    Path(path).write_text(json.dumps(report.to_dict(), indent=1) + "\n", encoding="utf-8")


def read_json(path) -> EffectsReport:
    return EffectsReport.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def write_path_table(report: EffectsReport, path, precision: int | None = 4) -> None:
    """Mediator rows with ``alpha`` and ``IE`` sub-rows per exposure, plus ``beta``."""
    active_mediators = np.nonzero(report.active.any(axis=0))[0]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["mediator", "quantity", *report.exposure_labels, "beta"])
        ie = report.ie_matrix
        for k in active_mediators:
            name = report.mediator_labels[k]
            w.writerow([name, "alpha", *(_fmt(a, precision) for a in report.alpha[:, k]),
                        _fmt(report.beta[k], precision)])
            w.writerow([name, "IE", *(_fmt(v, precision) for v in ie[:, k]), ""])


def summary_rows(report: EffectsReport) -> list:
    """``[(name, per-exposure values, total)]`` for the IE, DE and TE rows."""
    return [(name, vals, float(np.sum(vals)))
            for name, vals in (("IE", report.ie_total), ("DE", report.de), ("TE", report.te))]


def write_summary_table(report: EffectsReport, path, precision: int | None = 4) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["effect", *report.exposure_labels, "Total"])
        for name, vals, total in summary_rows(report):
            w.writerow([name, *(_fmt(v, precision) for v in vals), _fmt(total, precision)])


def read_summary_table(path) -> dict:
    """``{effect: (per-exposure array, total)}`` from :func:`write_summary_table`."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return {row[0]: (np.array([float(v) for v in row[1:-1]]), float(row[-1])) for row in rows[1:]}


def write_edge_list(report: EffectsReport, path, outcome_label: str = "Y", precision: int | None = 4) -> None:
    """Edges of the active path diagram: ``source,target,kind,value``."""
    act = report.active
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["source", "target", "kind", "value"])
        for j, k in zip(*np.nonzero(act)):
            w.writerow([report.exposure_labels[j], report.mediator_labels[k], "alpha",
                        _fmt(report.alpha[j, k], precision)])
        for k in np.nonzero(act.any(axis=0))[0]:
            w.writerow([report.mediator_labels[k], outcome_label, "beta", _fmt(report.beta[k], precision)])
        for j in np.nonzero(np.abs(report.gamma) > report.zero_threshold)[0]:
            w.writerow([report.exposure_labels[j], outcome_label, "gamma", _fmt(report.gamma[j], precision)])
