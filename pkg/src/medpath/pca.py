"""Principal components of the exposure block.

Components come from the SVD of the centered (optionally column-scaled)
matrix, which stays stable when there are more exposure columns than rows.
Each loading column is signed so that its largest-magnitude entry is
positive, which makes scores reproducible across LAPACK builds.

``whiten=True`` divides every score column by its sample standard deviation.
The penalized fit then applies one threshold to components of equal
variance; :func:`medpath.effects.decompose` maps coefficients back to raw
score units through ``score_scale``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.80


class PcaError(ValueError):
    pass


@dataclass(frozen=True)
class PcaModel:
    """Fitted principal-component map.

    Attributes
    ----------
    means, scales : ndarray of shape (r,)
        Column centering and scaling (scales are 1.0 when scaling is off).
    loadings : ndarray of shape (r, k)
        Orthonormal component directions by decreasing variance.
    variance_ratios : ndarray of shape (k,)
        Fraction of total variance carried by each component.
    score_sd : ndarray of shape (k,)
        Sample standard deviation of each score column on the fitting data.
    q : int
        Number of components emitted by :func:`transform`.
    """

    means: np.ndarray
    scales: np.ndarray
    loadings: np.ndarray
    variance_ratios: np.ndarray
    score_sd: np.ndarray
    q: int
    scaled: bool = False
    whiten: bool = False

    def __post_init__(self):
        for name in ("means", "scales", "loadings", "variance_ratios", "score_sd"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.loadings.ndim != 2:
            raise PcaError("loadings must be a matrix")
        r, k = self.loadings.shape
        if self.means.shape != (r,) or self.scales.shape != (r,):
            raise PcaError("means/scales length must match the loading rows")
        if self.variance_ratios.shape != (k,) or self.score_sd.shape != (k,):
            raise PcaError("variance_ratios/score_sd length must match the loading columns")
        if not 1 <= int(self.q) <= k:
            raise PcaError(f"q must lie in [1, {k}], got {self.q}")
        object.__setattr__(self, "q", int(self.q))

    @property
    def n_features(self) -> int:
        return self.loadings.shape[0]

    @property
    def k(self) -> int:
        return self.loadings.shape[1]

    @property
    def score_scale(self) -> np.ndarray:
        """Per-score divisor applied by :func:`transform` (ones unless whitened)."""
        return self.score_sd[: self.q] if self.whiten else np.ones(self.q)

    def with_q(self, q: int) -> "PcaModel":
        return replace(self, q=q)

    def to_dict(self) -> dict:
        return {
            "means": self.means.tolist(),
            "scales": self.scales.tolist(),
            "loadings": self.loadings.tolist(),
            "variance_ratios": self.variance_ratios.tolist(),
            "score_sd": self.score_sd.tolist(),
            "q": self.q,
            "scaled": self.scaled,
            "whiten": self.whiten,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PcaModel":
        return cls(
            means=d["means"],
            scales=d["scales"],
            loadings=np.asarray(d["loadings"], dtype=float).reshape(len(d["means"]), -1),
            variance_ratios=d["variance_ratios"],
            score_sd=d["score_sd"],
            q=d["q"],
            scaled=bool(d.get("scaled", False)),
            whiten=bool(d.get("whiten", False)),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "PcaModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def select_num_components(model_or_ratios, threshold: float = DEFAULT_THRESHOLD) -> int:
    """Smallest ``q`` whose cumulative variance ratio reaches ``threshold``.

    Accepts a :class:`PcaModel` or a plain sequence of ratios. When the
    threshold cannot be reached, all components are used and a warning is
    logged.
    """
    if not 0 < threshold <= 1:
        raise ValueError(f"threshold must lie in (0, 1], got {threshold}")
    ratios = getattr(model_or_ratios, "variance_ratios", model_or_ratios)
    cum = np.cumsum(np.asarray(ratios, dtype=float))
    # slack for the rounding in a cumulative sum that should reach 1
    hit = np.nonzero(cum >= threshold - 1e-12)[0]
    if hit.size == 0:
        log.warning(
            "variance threshold %.4g unreachable (max %.4g); using all %d components",
            threshold, cum[-1], cum.size, extra={"event": "threshold_unreachable"},
        )
        return int(cum.size)
    return int(hit[0] + 1)


def fit_pca(
    X,
    scale: bool = False,
    threshold: float = DEFAULT_THRESHOLD,
    n_components: int | None = None,
    whiten: bool = False,
) -> PcaModel:
    """Fit components to ``X`` (n, r) and select ``q``.

    ``n_components`` overrides the variance threshold. Components beyond the
    numerical rank of the centered matrix are dropped, so ``q`` never exceeds
    ``min(n - 1, r)``.

    Raises
    ------
    PcaError
        If ``n < 2``, a column is constant while ``scale`` is on, the data have
        no variance, or ``n_components`` exceeds the rank.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise PcaError("need a 2-D exposure matrix with at least 2 rows")
    n, r = X.shape
    means = X.mean(axis=0)
    Z = X - means
    scales = np.ones(r)
    if scale:
        scales = Z.std(axis=0, ddof=1)
        if np.any(scales <= 0):
            bad = np.nonzero(scales <= 0)[0].tolist()
            raise PcaError(f"zero-variance exposure column(s) {bad} cannot be scaled")
        Z = Z / scales
    _, s, vt = np.linalg.svd(Z, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        raise PcaError("exposure matrix has no variance")
    k = int(np.sum(s > s[0] * max(n, r) * np.finfo(float).eps))
    s, vt = s[:k], vt[:k]
    # largest-magnitude entry of every loading positive
    lead = vt[np.arange(k), np.argmax(np.abs(vt), axis=1)]
    vt = vt * np.where(lead < 0, -1.0, 1.0)[:, None]
    var = s * s
    ratios = var / np.sum(var)
    if n_components is None:
        q = select_num_components(ratios, threshold)
    else:
        if not 1 <= n_components <= k:
            raise PcaError(f"n_components={n_components} outside [1, {k}] (numerical rank {k})")
        q = int(n_components)
    return PcaModel(means, scales, vt.T, ratios, s / np.sqrt(n - 1), q, scaled=scale, whiten=whiten)


def transform(model: PcaModel, X) -> np.ndarray:
    """First ``q`` component scores of ``X``."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise PcaError(f"expected {model.n_features} exposure columns, got shape {X.shape}")
    scores = ((X - model.means) / model.scales) @ model.loadings[:, : model.q]
    if model.whiten:
        scores = scores / model.score_sd[: model.q]
    return scores


def fit_transform(X, **kwargs) -> tuple[PcaModel, np.ndarray]:
    model = fit_pca(X, **kwargs)
    return model, transform(model, X)
