"""Command-line interface: ``medpath {pca,fit,effects,simulate}``.

Every flag can also come from an INI file given with ``--config``. Keys in
the ``[medpath]`` section apply to all subcommands, keys in a section named
after the subcommand apply to it alone, and flags on the command line win.
Keys are flag names without the leading dashes; boolean flags take
``true``/``false``. A ``[roles]`` section in the same file serves as the
column-role mapping when ``--roles`` is not given.

Warnings go to stderr as one JSON object per line; outputs never depend on
them. The default worker count is read from ``MEDPATH_THREADS``.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import DatasetError, load_dataset, read_roles, residualize
from .design import Design
from .effects import decompose, write_edge_list, write_json, write_path_table, write_summary_table
from .params import ModelParams
from .pca import PcaError, PcaModel, fit_pca, transform
from .penalties import PenaltyWeights
from .simulation import (
    SimSettings, SimSpec, estimation_table, generate, plant_effects, run_replicates,
    selection_table, write_replicates, write_table,
)
from .solver import FitConfig, SolverError
from .tuning import BIC_KINDS, BicError, TuningGrid, default_grid, grid_search

log = logging.getLogger("medpath")

THREADS_ENV = "MEDPATH_THREADS"
COMMANDS = ("pca", "fit", "effects", "simulate")
_BOOLEAN_FLAGS: set = set()


class JsonLogFormatter(logging.Formatter):
    def format(self, record):
        entry = {"level": record.levelname, "logger": record.name, "message": record.getMessage()}
        if hasattr(record, "event"):
            entry["event"] = record.event
        return json.dumps(entry, sort_keys=True)


def _float_list(text: str) -> tuple:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text: str) -> tuple:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _bool_flag(parser, name: str, help: str, default: bool = False):
    _BOOLEAN_FLAGS.add(name)
    parser.add_argument(f"--{name}", action=argparse.BooleanOptionalAction, default=default, help=help)


def _default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _add_data_args(sp):
    sp.add_argument("--data", required=True, help="input CSV (UTF-8, header row)")
    sp.add_argument("--roles", help="INI file with a [roles] section (defaults to --config)")
    sp.add_argument("--na-policy", choices=["error"], default="error", help="missing values are rejected")


def _add_pca_args(sp):
    sp.add_argument("--threshold", type=float, default=0.80, help="cumulative variance ratio for q")
    sp.add_argument("--q", type=int, help="explicit component count (overrides --threshold)")
    _bool_flag(sp, "scale", "standardize exposure columns before PCA")
    _bool_flag(sp, "whiten", "divide scores by their standard deviation")


def _add_solver_args(sp):
    sp.add_argument("--c0", type=float, default=2.0)
    sp.add_argument("--rho", type=float, default=1.0)
    sp.add_argument("--tol", type=float, default=1e-6)
    sp.add_argument("--max-iter", type=int, default=10000)
    sp.add_argument("--loss-scale", choices=["mean", "sum"], default="mean")
    sp.add_argument("--bic", choices=BIC_KINDS, default=None)
    sp.add_argument("--zero-threshold", type=float, default=1e-8)
    sp.add_argument("--threads", type=int, default=_default_threads())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="medpath", description="High-dimensional mediation path analysis")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help="INI file supplying default flag values")
    parser.add_argument("--log-level", default="WARNING")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("pca", help="fit principal components of the adjusted exposures")
    _add_data_args(sp)
    _add_pca_args(sp)
    sp.add_argument("--out-model", required=True)
    sp.add_argument("--out-scores", required=True)
    sp.set_defaults(func=cmd_pca)

    sp = sub.add_parser("fit", help="adjust, compress, tune and fit")
    _add_data_args(sp)
    _add_pca_args(sp)
    sp.add_argument("--pca-model", help="reuse a model written by 'medpath pca'")
    _bool_flag(sp, "standardize", "scale mediators and outcome to unit variance (effects reported in original units)")
    sp.add_argument("--lambda1", type=_float_list, help="comma-separated lambda1 values")
    sp.add_argument("--ratio2", type=_float_list, help="lambda2/lambda1 values")
    sp.add_argument("--ratio3", type=_float_list, help="lambda3/lambda1 values")
    sp.add_argument("--c1", type=_float_list, help="c1 values")
    _bool_flag(sp, "warm-start", "warm-start along lambda1 paths (winner refitted from zeros)")
    _add_solver_args(sp)
    sp.add_argument("--out-fit", required=True)
    sp.add_argument("--out-table", required=True)
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("effects", help="effect tables from a fit file")
    sp.add_argument("--fit", required=True)
    sp.add_argument("--format", choices=["csv", "json"], default="csv")
    sp.add_argument("--out", required=True, help="output prefix")
    sp.add_argument("--precision", type=int, default=4, help="significant digits in CSV tables")
    sp.set_defaults(func=cmd_effects)

    sp = sub.add_parser("simulate", help="synthetic study with planted paths")
    sp.add_argument("--n", type=_int_list, default=(100, 500, 1000), help="comma-separated sample sizes")
    defaults = SimSpec()
    sp.add_argument("--r", type=int, default=defaults.r)
    sp.add_argument("--p", type=int, default=defaults.p)
    sp.add_argument("--decay-rate", type=float, default=defaults.decay_rate)
    sp.add_argument("--lambda-max", type=float, default=defaults.lambda_max)
    sp.add_argument("--threshold", type=float, default=defaults.variance_threshold)
    sp.add_argument("--sparsity", type=float, default=defaults.sparsity)
    sp.add_argument("--effect-scale", type=float, default=defaults.effect_scale)
    sp.add_argument("--noise-sd-mediator", type=float, default=defaults.noise_sd_mediator)
    sp.add_argument("--noise-sd-outcome", type=float, default=defaults.noise_sd_outcome)
    sp.add_argument("--direct-fraction", type=float, default=defaults.direct_fraction)
    sp.add_argument("--n-reps", type=int, default=30)
    sp.add_argument("--seed", type=int, default=0)
    _bool_flag(sp, "whiten", "whiten PCA scores before fitting")
    _add_solver_args(sp)
    sp.add_argument("--out-dir", required=True)
    _bool_flag(sp, "export-dataset", "write one dataset and its truth per n instead of running replicates")
    sp.set_defaults(func=cmd_simulate)
    return parser


def _config_argv(path: str, command: str) -> list:
    parser = configparser.ConfigParser(interpolation=None)
    if not parser.read(path, encoding="utf-8"):
        raise FileNotFoundError(f"config file not found: {path}")
    argv = []
    for section in ("medpath", command):
        if not parser.has_section(section):
            continue
        for key, value in parser.items(section):
            if key in _BOOLEAN_FLAGS:
                argv.append(f"--{key}" if parser.getboolean(section, key) else f"--no-{key}")
            else:
                argv.append(f"--{key}={value}")
    return argv


def parse_args(argv=None) -> argparse.Namespace:
    argv = list(sys.argv[1:] if argv is None else argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        commands = [a for a in argv if a in COMMANDS]
        if commands:
            # config values go first so explicit flags override them
            split = argv.index(commands[0]) + 1
            argv = argv[:split] + _config_argv(known.config, commands[0]) + argv[split:]
    return build_parser().parse_args(argv)


def _roles(args) -> dict:
    path = args.roles or args.config
    if not path:
        raise DatasetError("no column roles: pass --roles or a --config file with a [roles] section")
    return read_roles(path)


def _load_adjusted(args, standardize=False):
    raw = load_dataset(args.data, _roles(args))
    return residualize(raw, standardize=standardize)


def _fit_pca(args, X) -> PcaModel:
    return fit_pca(X, scale=args.scale, threshold=args.threshold, n_components=args.q, whiten=args.whiten)


def _write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=1) + "\n", encoding="utf-8")


def cmd_pca(args) -> int:
    adj = _load_adjusted(args)
    model = _fit_pca(args, adj.X)
    scores = transform(model, adj.X)
    model.save(args.out_model)
    with open(args.out_scores, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(["id"] + [f"PC{j + 1}" for j in range(model.q)]) + "\n")
        for rid, row in zip(adj.row_ids, scores):
            fh.write(",".join([rid] + [repr(float(v)) for v in row]) + "\n")
    cum = np.cumsum(model.variance_ratios)
    print("component,variance_ratio,cumulative")
    for j in range(min(model.k, max(model.q, 10))):
        print(f"PC{j + 1},{model.variance_ratios[j]:.4f},{cum[j]:.4f}")
    print(f"selected q = {model.q}")
    return 0


def _grid(args, design: Design) -> TuningGrid:
    grid = default_grid(design, args.loss_scale)
    axes = {"lambda1_values": args.lambda1, "ratio2_values": args.ratio2,
            "ratio3_values": args.ratio3, "c1_values": args.c1}
    return replace(grid, zero_threshold=args.zero_threshold, **{k: v for k, v in axes.items() if v})


def _fit_config(args) -> FitConfig:
    weights = PenaltyWeights(c0=args.c0, rho=args.rho)
    return FitConfig(weights, tol=args.tol, max_iter=args.max_iter, loss_scale=args.loss_scale)


def cmd_fit(args) -> int:
    adj = _load_adjusted(args, standardize=args.standardize)
    if args.pca_model:
        model = PcaModel.load(args.pca_model)
        if args.q is not None:
            model = model.with_q(args.q)
    else:
        model = _fit_pca(args, adj.X)
    design = Design(transform(model, adj.X), adj.M, adj.Y)
    grid = _grid(args, design)
    bic = args.bic or "literal"
    tuned = grid_search(design, grid, _fit_config(args), bic=bic, threads=args.threads, warm_start=args.warm_start)
    tuned.to_csv(args.out_table)
    res = tuned.fit
    best = tuned.best
    doc = {
        "params": res.params.to_dict(),
        "converged": res.converged,
        "iterations": res.iterations,
        "objective": res.objective,
        "loss_m": res.loss_m,
        "loss_y": res.loss_y,
        "bic_kind": bic,
        "bic": best.bic,
        "fallback": tuned.fallback,
        "config": replace(_fit_config(args), weights=best.weights).to_dict(),
        "zero_threshold": args.zero_threshold,
        "n": design.n,
        "exposure_labels": [f"PC{j + 1}" for j in range(model.q)],
        "mediator_labels": list(adj.mediator_names),
        "outcome_label": adj.outcome_name,
        "m_scale": adj.m_scale.tolist(),
        "y_scale": adj.y_scale,
        "score_scale": model.score_scale.tolist(),
    }
    _write_json(doc, args.out_fit)
    w = best.weights
    print(f"selected lambda1={w.lambda1:.6g} lambda2={w.lambda2:.6g} lambda3={w.lambda3:.6g} c1={w.c1:.6g} "
          f"bic={best.bic:.6g} active={best.active_set_size}")
    if not res.converged:
        print(f"note: selected fit did not converge within {args.max_iter} iterations")
    if tuned.fallback:
        print("note: no grid cell converged; lowest objective selected")
    return 0


def load_fit_report(path):
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        params = ModelParams.from_dict(doc["params"])
        report = decompose(
            params,
            doc.get("exposure_labels", ()),
            doc.get("mediator_labels", ()),
            doc.get("zero_threshold", 1e-8),
            m_scale=doc.get("m_scale"),
            y_scale=doc.get("y_scale", 1.0),
            score_scale=doc.get("score_scale"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed fit file {path}: {exc}") from exc
    return report, doc.get("outcome_label", "Y")


def cmd_effects(args) -> int:
    report, outcome = load_fit_report(args.fit)
    if args.format == "json":
        write_json(report, f"{args.out}.json")
    else:
        write_path_table(report, f"{args.out}_paths.csv", args.precision)
        write_summary_table(report, f"{args.out}_summary.csv", args.precision)
        write_edge_list(report, f"{args.out}_edges.csv", outcome, args.precision)
    print(f"{len(report.active_paths)} active paths")
    return 0


def _sim_spec(args, n: int) -> SimSpec:
    return SimSpec(
        n=n, r=args.r, p=args.p, decay_rate=args.decay_rate, lambda_max=args.lambda_max,
        variance_threshold=args.threshold, sparsity=args.sparsity, effect_scale=args.effect_scale,
        noise_sd_mediator=args.noise_sd_mediator, noise_sd_outcome=args.noise_sd_outcome,
        direct_fraction=args.direct_fraction, seed=args.seed,
    )


def _export_dataset(spec: SimSpec, out: Path) -> None:
    data, truth = generate(spec)
    stem = out / f"sim_n{spec.n}"
    names = list(data.exposure_names) + list(data.mediator_names) + [data.outcome_name]
    table = np.column_stack([data.X, data.M, data.Y])
    with open(f"{stem}.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(["id"] + names) + "\n")
        for i, row in enumerate(table):
            fh.write(",".join([str(i + 1)] + [repr(float(v)) for v in row]) + "\n")
    Path(f"{stem}_roles.ini").write_text(
        "[roles]\nid = id\nx* = exposure\nm* = mediator\ny = outcome\n", encoding="utf-8"
    )
    _write_json({"spec": spec.to_dict(), "truth": truth.to_dict()}, f"{stem}_truth.json")


def cmd_simulate(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    specs = [_sim_spec(args, n) for n in args.n]
    if args.export_dataset:
        for spec in specs:
            _export_dataset(spec, out)
        print(f"wrote {len(specs)} dataset(s) to {out}")
        return 0
    config = _fit_config(args)
    settings = SimSettings(bic=args.bic or "gaussian", whiten=args.whiten,
                           zero_threshold=args.zero_threshold, fit_config=config)
    runs = [run_replicates(spec, args.n_reps, settings, threads=args.threads) for spec in specs]
    write_replicates(runs, out / "replicates.csv")
    # planted coefficients do not depend on n
    est = estimation_table(runs, plant_effects(specs[0]))
    sel = selection_table(runs)
    write_table(est, out / "estimation.csv")
    write_table(sel, out / "selection.csv")
    for rows in (est, sel):
        for row in rows:
            print(",".join(f"{v:.4g}" if isinstance(v, float) else str(v) for v in row))
    return 0


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except FileNotFoundError as exc:
        print(f"medpath: error: {exc}", file=sys.stderr)
        return 2
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(JsonLogFormatter())
    root = logging.getLogger("medpath")
    saved = root.handlers[:], root.level, root.propagate
    root.handlers[:] = [handler]
    root.setLevel(args.log_level.upper())
    root.propagate = False
    try:
        return args.func(args)
    except (DatasetError, PcaError, SolverError, BicError, ValueError, FileNotFoundError, OSError) as exc:
        print(f"medpath: error: {exc}", file=sys.stderr)
        return 1
    finally:
        root.handlers[:], root.level, root.propagate = saved
