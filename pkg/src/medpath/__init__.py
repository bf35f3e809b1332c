"""High-dimensional mediation path analysis.

Exposures are compressed to principal-component scores, the two-equation
path model is fitted by penalized least squares with augmented-Lagrangian
updates, and penalty weights are chosen by BIC over a grid.
"""

__version__ = "0.1.0"

from .dataset import AdjustedDataset, DatasetError, RawDataset, load_dataset, read_roles, residualize
from .design import Design
from .effects import EffectsReport, decompose
from .params import ModelParams
from .pca import PcaError, PcaModel, fit_pca, select_num_components, transform
from .penalties import PenaltyWeights, eval_objective, eval_r1, eval_r2, eval_r3, soft_threshold
from .solver import AdmmState, FitConfig, FitResult, SolverError, fit
from .tuning import TuningGrid, TuningResult, compute_bic, default_grid, grid_search

__all__ = [
    "AdjustedDataset", "AdmmState", "DatasetError", "Design", "EffectsReport", "FitConfig", "FitResult",
    "ModelParams", "PcaError", "PcaModel", "PenaltyWeights", "RawDataset", "SolverError", "TuningGrid", "TuningResult",
    "compute_bic", "decompose", "default_grid", "eval_objective", "eval_r1", "eval_r2", "eval_r3", "fit",
    "fit_pca", "grid_search", "load_dataset", "read_roles", "residualize", "select_num_components",
    "soft_threshold", "transform",
]
