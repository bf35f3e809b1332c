"""Loading and covariate adjustment of exposure / mediator / outcome tables.

A data file is a UTF-8 CSV with a header row. Every column is given exactly
one role through a mapping ``{column name or glob: role}``; the mapping can be
read from the ``[roles]`` section of an INI file with :func:`read_roles`::

    [roles]
    subject = id
    pep_* = exposure
    vol_* = mediator
    memory = outcome
    age = covariate

Exact column names take precedence over glob patterns. Missing values are
rejected, never imputed.
"""

from __future__ import annotations

import configparser
import csv
import fnmatch
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ROLES = ("exposure", "mediator", "outcome", "covariate", "id", "ignore")
NA_TOKENS = frozenset({"", "na", "nan", "null", "none"})


class DatasetError(ValueError):
    pass


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class RawDataset:
    """Validated blocks: ``X`` (n, r), ``M`` (n, p), ``Y`` (n,), ``C`` (n, c)."""

    X: np.ndarray
    M: np.ndarray
    Y: np.ndarray
    C: np.ndarray
    row_ids: tuple = ()
    exposure_names: tuple = ()
    mediator_names: tuple = ()
    outcome_name: str = "Y"
    covariate_names: tuple = ()

    def __post_init__(self):
        X = np.array(self.X, dtype=float, ndmin=2)
        M = np.array(self.M, dtype=float, ndmin=2)
        Y = np.array(self.Y, dtype=float).reshape(-1)
        n = Y.shape[0]
        C = np.zeros((n, 0)) if self.C is None else np.array(self.C, dtype=float).reshape(n, -1)
        if n < 2:
            raise DatasetError(f"need at least 2 rows, got {n}")
        for name, block in (("X", X), ("M", M), ("C", C)):
            if block.shape[0] != n:
                raise DatasetError(f"block {name} has {block.shape[0]} rows, outcome has {n}")
            if not np.all(np.isfinite(block)):
                raise DatasetError(f"block {name} contains non-finite entries")
        if not np.all(np.isfinite(Y)):
            raise DatasetError("outcome contains non-finite entries")
        if X.shape[1] < 1 or M.shape[1] < 1:
            raise DatasetError("need at least one exposure and one mediator column")
        names = {
            "exposure_names": (self.exposure_names, X.shape[1], "x"),
            "mediator_names": (self.mediator_names, M.shape[1], "m"),
            "covariate_names": (self.covariate_names, C.shape[1], "c"),
        }
        for attr, (given, width, prefix) in names.items():
            given = tuple(given) or tuple(f"{prefix}{i + 1}" for i in range(width))
            if len(given) != width:
                raise DatasetError(f"{attr} has {len(given)} entries for {width} columns")
            if len(set(given)) != width:
                raise DatasetError(f"{attr} are not unique")
            object.__setattr__(self, attr, given)
        row_ids = tuple(self.row_ids) or tuple(str(i + 1) for i in range(n))
        if len(row_ids) != n:
            raise DatasetError(f"{len(row_ids)} row ids for {n} rows")
        object.__setattr__(self, "row_ids", row_ids)
        for attr, arr in (("X", X), ("M", M), ("Y", Y), ("C", C)):
            object.__setattr__(self, attr, _readonly(arr))

    @property
    def n(self) -> int:
        return self.Y.shape[0]

    @property
    def r(self) -> int:
        return self.X.shape[1]

    @property
    def p(self) -> int:
        return self.M.shape[1]

    @property
    def c(self) -> int:
        return self.C.shape[1]


@dataclass(frozen=True)
class AdjustedDataset:
    """Covariate-adjusted blocks.

    ``m_scale`` and ``y_scale`` are the standard deviations divided out when
    standardization was requested (all ones otherwise); effects fitted on the
    standardized blocks are mapped back with them.
    """

    X_adj: np.ndarray
    M_adj: np.ndarray
    Y_adj: np.ndarray
    C: np.ndarray
    adjustment_record: dict = field(default_factory=dict)
    m_scale: np.ndarray | None = None
    y_scale: float = 1.0
    row_ids: tuple = ()
    exposure_names: tuple = ()
    mediator_names: tuple = ()
    outcome_name: str = "Y"
    covariate_names: tuple = ()

    def __post_init__(self):
        for attr in ("X_adj", "M_adj", "Y_adj", "C"):
            object.__setattr__(self, attr, _readonly(getattr(self, attr)))
        m_scale = np.ones(self.M_adj.shape[1]) if self.m_scale is None else self.m_scale
        object.__setattr__(self, "m_scale", _readonly(m_scale))
        object.__setattr__(self, "y_scale", float(self.y_scale))

    # same block names as RawDataset so adjustment can be re-applied
    @property
    def X(self) -> np.ndarray:
        return self.X_adj

    @property
    def M(self) -> np.ndarray:
        return self.M_adj

    @property
    def Y(self) -> np.ndarray:
        return self.Y_adj

    @property
    def n(self) -> int:
        return self.Y_adj.shape[0]

    @property
    def standardized(self) -> bool:
        return bool(self.adjustment_record.get("standardized", False))


def read_roles(path) -> dict:
    """Read the ``[roles]`` section of an INI file into ``{pattern: role}``."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # column names are case-sensitive
    if not parser.read(path, encoding="utf-8"):
        raise FileNotFoundError(f"roles file not found: {path}")
    if not parser.has_section("roles"):
        raise DatasetError(f"{path}: no [roles] section")
    return dict(parser.items("roles"))


def _assign_roles(header: list, roles: dict) -> list:
    bad = {v for v in roles.values() if v not in ROLES}
    if bad:
        raise DatasetError(f"unknown role(s) {sorted(bad)}; expected one of {ROLES}")
    exact = {k: v for k, v in roles.items() if not any(ch in k for ch in "*?[")}
    globs = {k: v for k, v in roles.items() if k not in exact}
    missing = [k for k in exact if k not in header]
    if missing:
        raise DatasetError(f"roles name columns absent from the file: {missing}")
    assigned = []
    for col in header:
        if col in exact:
            assigned.append(exact[col])
            continue
        hits = {role for pat, role in globs.items() if fnmatch.fnmatchcase(col, pat)}
        if not hits:
            raise DatasetError(f"column {col!r} has no role")
        if len(hits) > 1:
            raise DatasetError(f"column {col!r} matches conflicting roles {sorted(hits)}")
        assigned.append(hits.pop())
    n_out = assigned.count("outcome")
    if n_out != 1:
        raise DatasetError(f"exactly one outcome column required, found {n_out}")
    if assigned.count("id") > 1:
        raise DatasetError("at most one id column allowed")
    return assigned


def load_dataset(path, roles: dict) -> RawDataset:
    """Read a CSV file into a :class:`RawDataset`, preserving row order.

    Parameters
    ----------
    path : path-like
        UTF-8 CSV with a header row.
    roles : dict
        Column name or glob pattern -> role, roles from :data:`ROLES`.

    Raises
    ------
    FileNotFoundError
        If ``path`` does not exist.
    DatasetError
        On role problems, duplicate headers, missing or non-numeric cells,
        or fewer than two rows. Cell errors carry file and line context.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"data file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DatasetError(f"{path}: empty file") from None
        if len(set(header)) != len(header):
            raise DatasetError(f"{path}: duplicate column names in header")
        assigned = _assign_roles(header, roles)
        numeric = [i for i, role in enumerate(assigned) if role not in ("id", "ignore")]
        id_col = assigned.index("id") if "id" in assigned else None
        rows, ids = [], []
        for row in reader:
            if not row:
                continue
            line = reader.line_num
            data_row = len(rows) + 1
            if len(row) != len(header):
                raise DatasetError(f"{path}:{line}: expected {len(header)} fields, got {len(row)}")
            values = []
            for i in numeric:
                cell = row[i].strip()
                if cell.lower() in NA_TOKENS:
                    raise DatasetError(f"{path}:{line}: missing value at ({data_row}, {header[i]!r})")
                try:
                    v = float(cell)
                except ValueError:
                    raise DatasetError(
                        f"{path}:{line}: non-numeric value {cell!r} at ({data_row}, {header[i]!r})"
                    ) from None
                if not math.isfinite(v):
                    raise DatasetError(f"{path}:{line}: non-finite value at ({data_row}, {header[i]!r})")
                values.append(v)
            rows.append(values)
            ids.append(row[id_col].strip() if id_col is not None else str(data_row))
    if len(rows) < 2:
        raise DatasetError(f"{path}: need at least 2 data rows, got {len(rows)}")
    table = np.array(rows, dtype=float)
    num_roles = [assigned[i] for i in numeric]
    num_names = [header[i] for i in numeric]

    def block(role):
        idx = [k for k, rl in enumerate(num_roles) if rl == role]
        return table[:, idx], tuple(num_names[k] for k in idx)

    X, xn = block("exposure")
    M, mn = block("mediator")
    Y, yn = block("outcome")
    C, cn = block("covariate")
    if not xn or not mn:
        raise DatasetError("roles must assign at least one exposure and one mediator column")
    return RawDataset(X, M, Y[:, 0], C, tuple(ids), xn, mn, yn[0], cn)


def residualize(data, standardize: bool = False, rank_tol: float = 1e-10) -> AdjustedDataset:
    """Replace every column by its OLS residual on ``[1, C]``.

    With no covariates this is plain mean-centering. ``standardize`` further
    divides each mediator column and the outcome by its sample standard
    deviation (``ddof=1``) and records the divisors.

    Raises
    ------
    DatasetError
        If ``[1, C]`` is rank deficient, or a mediator/outcome column has
        zero residual variance when standardizing.
    """
    n = data.n
    C = np.asarray(data.C, dtype=float).reshape(n, -1)
    design = np.column_stack([np.ones(n), C])
    if design.shape[1] >= n:
        raise DatasetError(f"covariate design has {design.shape[1]} columns for {n} rows")
    Q, R = np.linalg.qr(design)
    diag = np.abs(np.diag(R))
    if diag.min() <= rank_tol * max(diag.max(), 1.0) * math.sqrt(n):
        raise DatasetError("covariate design [1, C] is rank deficient")

    def resid(Z):
        Z = np.asarray(Z, dtype=float)
        return Z - Q @ (Q.T @ Z)

    X_adj, M_adj, Y_adj = resid(data.X), resid(data.M), resid(data.Y)
    m_scale = np.ones(M_adj.shape[1])
    y_scale = 1.0
    if standardize:
        m_scale = M_adj.std(axis=0, ddof=1)
        y_scale = float(Y_adj.std(ddof=1))
        if np.any(m_scale <= 0) or y_scale <= 0:
            raise DatasetError("cannot standardize a mediator or outcome with zero residual variance")
        M_adj = M_adj / m_scale
        Y_adj = Y_adj / y_scale
        if getattr(data, "standardized", False):
            m_scale = m_scale * data.m_scale
            y_scale = y_scale * data.y_scale
    elif getattr(data, "standardized", False):
        m_scale, y_scale = np.asarray(data.m_scale), data.y_scale
    record = {
        "method": "ols_residual" if C.shape[1] else "center",
        "covariates": list(getattr(data, "covariate_names", ())),
        "standardized": bool(standardize or getattr(data, "standardized", False)),
    }
    return AdjustedDataset(
        X_adj, M_adj, Y_adj, C, record, m_scale, y_scale,
        row_ids=data.row_ids,
        exposure_names=data.exposure_names,
        mediator_names=data.mediator_names,
        outcome_name=data.outcome_name,
        covariate_names=data.covariate_names,
    )
