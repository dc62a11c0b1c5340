"""Command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 runtime failure (including a failed theorem check).
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from . import __version__
from .config import (
    apply_overrides,
    build_experiment,
    build_grid,
    read_config,
    resolve_seed,
    theorem_options,
)
from .dataset import make_gaussian_imbalanced, write_csv
from .errors import AFSmoteError, ConfigError, DataError
from .pipeline import (
    augment_dataset,
    canonical_json,
    config_dict,
    config_hash,
    emit_report,
    pooled_reliability,
    run_pipeline,
    run_sweep,
    theorem_check,
)
from .samplers import write_candidates_csv

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _seed_arg(text):
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= n < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return n


def _positive_int(text):
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if n < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return n


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", "-c", help="sectioned key=value config file")
    common.add_argument("--outdir", "-o", default="out", help="output root directory (default: out)")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config key; repeatable, applied after the file")
    common.add_argument("--seed", type=_seed_arg, help="experiment seed (beats config and AFSMOTE_SEED)")
    common.add_argument("--impute", choices=("reject", "mean"),
                        help="NaN policy for CSV input (mean = training-split column means)")
    common.add_argument("--quiet", "-q", action="store_true", help="suppress progress on stderr")

    p = _Parser(prog="afsmote", description="Filtered SMOTE-family oversampling experiments.")
    p.add_argument("--version", action="version", version=f"afsmote {__version__}")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    g = sub.add_parser("gen-synth", parents=[common], help="write the synthetic Gaussian dataset to CSV")
    g.add_argument("--output", help="CSV path (default: <outdir>/<hash>/synthetic.csv)")

    a = sub.add_parser("augment", parents=[common], help="oversample and filter one dataset")
    a.add_argument("--emit-candidates", action="store_true", help="also write candidates.csv")
    a.add_argument("--emit-scores", action="store_true", help="also write scores.csv (head scores, S, retained)")

    r = sub.add_parser("run", parents=[common], help="cross-validated experiment; writes report.json")
    r.add_argument("--format", choices=("json", "csv"), default="json", help="report format (default: json)")

    s = sub.add_parser("sweep", parents=[common], help="grid sweep over lambda, p0, k and ratio")
    s.add_argument("--jobs", "-j", type=_positive_int, default=1, help="concurrent cells (default: 1)")

    t = sub.add_parser("theorem-check", parents=[common], help="directional and bound checks on synthetic data")
    t.add_argument("--seeds", type=_positive_int, help="number of replications (default: 5)")
    return p


def _resolve(args):
    flat = read_config(args.config) if args.config else {}
    flat = apply_overrides(flat, args.overrides)
    if args.impute:
        flat["data.nan_policy"] = args.impute
    seed = resolve_seed(flat, args.seed)
    return flat, build_experiment(flat, seed)


def _out_dir(args, config) -> Path:
    d = Path(args.outdir) / config_hash(config)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _provenance(args, config, extra=None):
    prov = {
        "version": __version__,
        "command": args.command,
        "config": config_dict(config),
        "config_hash": config_hash(config),
        "config_file": args.config,
        "overrides": list(args.overrides),
        "seed": config.seed,
    }
    prov.update(extra or {})
    return prov


def _log(args, msg):
    if not args.quiet:
        print(msg, file=sys.stderr)


def cmd_gen_synth(args, flat, config):
    data = make_gaussian_imbalanced(config.data.synthetic)
    if args.output:
        path = Path(args.output)
        path.parent.mkdir(parents=True, exist_ok=True)
    else:
        path = _out_dir(args, config) / "synthetic.csv"
    write_csv(data, path, label_name=config.data.label_column)
    print(path)
    return EXIT_OK


def cmd_augment(args, flat, config):
    res = augment_dataset(config)
    out = _out_dir(args, config)
    write_csv(res.augmented, out / "augmented.csv", label_name=config.data.label_column)
    if args.emit_candidates:
        write_candidates_csv(res.candidates, out / "candidates.csv")
    if args.emit_scores:
        if res.filtered is None:
            _log(args, "note: filtering is disabled or no candidates were generated; scores.csv not written")
        else:
            res.filtered.to_csv(out / "scores.csv")
    n_kept = len(res.candidates) if res.filtered is None else int(res.filtered.retained.sum())
    summary = {"n_candidates": len(res.candidates), "n_retained": n_kept, "epsilon_hat": res.epsilon_hat,
               "fallback": res.candidates.fallback, "provenance": _provenance(args, config)}
    (out / "augment.json").write_text(canonical_json(summary), encoding="utf-8")
    print(out)
    return EXIT_OK


def cmd_run(args, flat, config):
    result = run_pipeline(config)
    result.provenance.update(_provenance(args, config))
    out = _out_dir(args, config)
    emit_report(result, args.format, out / f"report.{args.format}")
    if args.format != "json":
        emit_report(result, "json", out / "report.json")
    pooled_reliability(result).to_csv(out / "reliability.csv")
    print(out / "report.json")
    return EXIT_OK


def cmd_sweep(args, flat, config):
    grid = build_grid(flat)
    started = time.time()

    def progress(i, n):
        _log(args, f"cell {i}/{n}")

    res = run_sweep(config, grid, jobs=args.jobs, progress=progress)
    out = _out_dir(args, config)
    res.write_csv(out / "sweep.csv")
    failed = [(c, e) for c, _, r, e in res.rows if r is None]
    meta = _provenance(args, config, {
        "grid": {"lambda_values": grid.lambda_values, "p0_values": grid.p0_values,
                 "k_values": grid.k_values, "ratio_values": grid.ratio_values},
        "n_cells": len(res.rows), "n_failed": len(failed),
        "failures": [{"cell": list(c), "error": e} for c, e in failed],
        "timestamps": {"started": started, "finished": time.time()},
    })
    (out / "sweep.json").write_text(canonical_json(meta), encoding="utf-8")
    for c, e in failed:
        _log(args, f"cell {c} failed: {e}")
    print(out / "sweep.csv")
    return EXIT_OK


def cmd_theorem_check(args, flat, config):
    opts = theorem_options(flat)
    if args.seeds is not None:
        opts["n_seeds"] = args.seeds
    report = theorem_check(config.data.synthetic, config, **opts)
    out = _out_dir(args, config)
    payload = report.to_dict()
    payload["provenance"] = _provenance(args, config)
    path = out / "theorem.json"
    path.write_text(canonical_json(payload), encoding="utf-8")
    summary = report.summary
    _log(args, "theorem check: " + ", ".join(f"{k}={v}" for k, v in summary.items()))
    print(path)
    return EXIT_OK if summary["passed"] else EXIT_RUNTIME


COMMANDS = {
    "gen-synth": cmd_gen_synth,
    "augment": cmd_augment,
    "run": cmd_run,
    "sweep": cmd_sweep,
    "theorem-check": cmd_theorem_check,
}


def parse_and_dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    try:
        flat, config = _resolve(args)
        if args.command == "theorem-check" and config.data.csv_path:
            raise ConfigError("theorem-check runs on synthetic data only; unset data.csv_path", "data.csv_path")
        return COMMANDS[args.command](args, flat, config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError, IsADirectoryError, UnicodeDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (AFSmoteError, ValueError, ArithmeticError, OSError) as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main(argv=None) -> None:
    sys.exit(parse_and_dispatch(argv))
