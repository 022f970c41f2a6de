"""Command-line driver: generate synthetic streams, split dyads into folds,
run one algorithm against a stream, grid-search on validation data, and query
the exhaustive enumeration oracle.

Exit codes: 0 success, 2 configuration error, 3 data error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .evaluation import emit_report, enumerate_predictive
from .experiments import (Algorithm, RunConfig, config_to_dict, run_experiment,
                          run_grid)
from .model import Dyad, Hyperparams
from .streams import (StreamFormatError, SyntheticConfig, assortative_matrix,
                      cv_split, generate_synthetic, load_edge_list, load_mask,
                      permute_rows, save_edge_list, save_ground_truth,
                      save_mask)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3

_GRID_PARAM_TYPES = {
    "sweeps": int,
    "rejuvenation": int,
    "particles": int,
    "ess_threshold": float,
    "lambda0": float,
    "tau_strategy": str,
    "pair_mode": str,
    "seed": int,
}


class ConfigError(Exception):
    pass


class DataError(Exception):
    pass


def _parse_alpha(text: str, k: int):
    parts = [p for p in text.replace(",", " ").split() if p]
    values = [float(p) for p in parts]
    return values[0] if len(values) == 1 else tuple(values)


def _hyper_from_args(args) -> Hyperparams:
    alpha = _parse_alpha(args.alpha, args.k)
    if np.isscalar(alpha):
        return Hyperparams.symmetric(args.k, alpha, args.psi[0], args.psi[1])
    return Hyperparams(K=args.k, alpha=alpha, psi_one=args.psi[0],
                       psi_zero=args.psi[1])


def _onoff(value: str) -> bool:
    if value not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return value == "on"


def _add_model_flags(sub):
    sub.add_argument("--k", type=int, default=10, help="number of latent groups")
    sub.add_argument("--alpha", default="0.1",
                     help="Dirichlet concentration: scalar or comma list of K values")
    sub.add_argument("--psi", type=float, nargs=2, default=[1.0, 1.0],
                     metavar=("ONE", "ZERO"), help="Beta pseudo-counts")


def _add_run_flags(sub):
    _add_model_flags(sub)
    sub.add_argument("--algorithm", default="incremental_gibbs",
                     choices=[a.value for a in Algorithm])
    sub.add_argument("--sweeps", type=int, default=100,
                     help="warm-start sweeps (and batch refit sweeps)")
    sub.add_argument("--rejuvenation", type=int, default=0,
                     help="rejuvenation sequence size per observation")
    sub.add_argument("--particles", type=int, default=24)
    sub.add_argument("--ess-threshold", type=float, default=8.0)
    sub.add_argument("--lambda0", type=float, default=None,
                     help="change-rate threshold (time-dependent algorithms only)")
    sub.add_argument("--tau-strategy", default="inverse_rate",
                     choices=["inverse_rate", "deficit"])
    sub.add_argument("--implicit-absence", type=_onoff, default=True,
                     metavar="on|off")
    sub.add_argument("--pair-mode", default="alternating",
                     choices=["alternating", "joint"])
    sub.add_argument("--decorrelate", type=_onoff, default=False, metavar="on|off")
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--stream", required=True, help="edge-list file")
    sub.add_argument("--masks", required=True, help="fold mask file")
    sub.add_argument("--out", required=True, help="report base path (.csv/.json added)")


def _config_from_args(args) -> RunConfig:
    try:
        return RunConfig(
            algorithm=Algorithm(args.algorithm),
            hyper=_hyper_from_args(args),
            sweeps=args.sweeps,
            rejuvenation=args.rejuvenation,
            particles=args.particles,
            ess_threshold=args.ess_threshold,
            lambda0=args.lambda0,
            tau_strategy=args.tau_strategy,
            implicit_absence=args.implicit_absence,
            pair_mode=args.pair_mode,
            decorrelate=args.decorrelate,
            seed=args.seed,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _load_stream(path):
    try:
        return load_edge_list(path)
    except FileNotFoundError as exc:
        raise DataError(f"stream file not found: {path}") from exc
    except StreamFormatError as exc:
        raise DataError(str(exc)) from exc


def _load_mask(path):
    try:
        return load_mask(path)
    except FileNotFoundError as exc:
        raise DataError(f"mask file not found: {path}") from exc
    except (StreamFormatError, ValueError) as exc:
        raise DataError(str(exc)) from exc


# -- subcommands ---------------------------------------------------------------


def _cmd_generate(args) -> int:
    k = args.groups
    base = assortative_matrix(k, args.block_diag, args.block_offdiag)
    schedule = [(1, base)]
    if args.switch_interval is not None:
        if not 1 < args.switch_interval <= args.intervals:
            raise ConfigError("switch interval must lie in (1, intervals]")
        schedule.append((args.switch_interval, permute_rows(base)))
    if args.schedule_file is not None:
        try:
            with open(args.schedule_file, "r", encoding="utf-8") as fh:
                entries = json.load(fh)
            schedule = [(int(e["start"]), np.asarray(e["matrix"], dtype=float))
                        for e in entries]
        except FileNotFoundError as exc:
            raise DataError(f"schedule file not found: {args.schedule_file}") from exc
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"bad schedule file {args.schedule_file}: {exc}") from exc
    try:
        config = SyntheticConfig(nodes=args.nodes, groups=k,
                                 intervals=args.intervals,
                                 records_per_interval=args.records_per_interval,
                                 alpha_gen=args.alpha_gen,
                                 schedule=tuple(schedule), seed=args.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    stream, truth = generate_synthetic(config)
    save_edge_list(stream, args.out)
    print(f"wrote {len(stream)} records over {stream.horizon} intervals "
          f"({len(stream.nodes)} nodes) to {args.out}")
    if args.truth_out:
        save_ground_truth(truth, args.truth_out)
        print(f"wrote ground truth to {args.truth_out}")
    return EXIT_OK


def _cmd_split(args) -> int:
    stream = _load_stream(args.stream)
    universe = stream.dyad_universe()
    try:
        masks = cv_split(universe, folds=args.folds,
                         validation_fraction=args.validation_fraction,
                         rng=np.random.default_rng(args.seed))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for mask in masks:
        path = out_dir / f"mask_fold_{mask.fold_index}.txt"
        save_mask(mask, path)
        print(f"fold {mask.fold_index}: "
              f"{sum(1 for r in mask.roles.values() if r.value == 'train')} train / "
              f"{sum(1 for r in mask.roles.values() if r.value == 'validation')} validation / "
              f"{sum(1 for r in mask.roles.values() if r.value == 'test')} test "
              f"-> {path}")
    return EXIT_OK


def _cmd_run(args) -> int:
    config = _config_from_args(args)
    stream = _load_stream(args.stream)
    mask = _load_mask(args.masks)
    try:
        report = run_experiment(stream, mask, config)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    paths = emit_report(report, args.out)
    print(f"algorithm={config.algorithm.value} improvement={report.improvement:.6f}")
    for path in paths:
        print(f"wrote {path}")
    return EXIT_OK


def _parse_grid_spec(entries) -> dict:
    spec = {}
    for entry in entries:
        if "=" not in entry:
            raise ConfigError(f"grid entry {entry!r} is not name=v1,v2,...")
        name, _, values = entry.partition("=")
        name = name.strip().replace("-", "_")
        if name not in _GRID_PARAM_TYPES:
            raise ConfigError(f"cannot grid over {name!r}; choose from "
                              f"{sorted(_GRID_PARAM_TYPES)}")
        cast = _GRID_PARAM_TYPES[name]
        try:
            spec[name] = [cast(v) for v in values.split(",") if v]
        except ValueError as exc:
            raise ConfigError(f"bad grid value in {entry!r}: {exc}") from exc
        if not spec[name]:
            raise ConfigError(f"grid entry {entry!r} lists no values")
    if not spec:
        raise ConfigError("no grid entries given")
    return spec


def _cmd_grid(args) -> int:
    config = _config_from_args(args)
    stream = _load_stream(args.stream)
    mask = _load_mask(args.masks)
    spec = _parse_grid_spec(args.grid)
    try:
        result = run_grid(stream, mask, config, spec)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    for i, (cfg, score) in enumerate(result.cells):
        marker = " <- winner" if i == result.winner_index else ""
        settings = ", ".join(f"{n}={getattr(cfg, n)}" for n in spec)
        print(f"cell {i}: {settings} validation={score:.6f}{marker}")
    paths = emit_report(result.winner_report, args.out)
    if args.summary_out:
        summary = {
            "winner_index": result.winner_index,
            "cells": [{"config": config_to_dict(cfg), "validation_score": score}
                      for cfg, score in result.cells],
        }
        with open(args.summary_out, "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2)
            fh.write("\n")
        paths.append(args.summary_out)
    print(f"winner improvement={result.winner_report.improvement:.6f}")
    for path in paths:
        print(f"wrote {path}")
    return EXIT_OK


def _cmd_oracle(args) -> int:
    stream = _load_stream(args.stream)
    hyper_args = argparse.Namespace(k=args.k, alpha=args.alpha, psi=args.psi)
    try:
        hyper = _hyper_from_args(hyper_args)
        query = Dyad(args.query[0], args.query[1])
        prob = enumerate_predictive(stream.records, hyper.K, hyper.alpha,
                                    hyper.psi_one, hyper.psi_zero, query)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    print(f"P(Y({args.query[0]} -> {args.query[1]}) = 1) = {prob:.12f}")
    return EXIT_OK


# -- parser and entry point ------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mmsb-online",
        description="Online inference for mixed membership stochastic blockmodels")
    subs = parser.add_subparsers(dest="command", required=True)

    gen = subs.add_parser("generate", help="generate a synthetic stream")
    gen.add_argument("--nodes", type=int, default=60)
    gen.add_argument("--groups", type=int, default=3)
    gen.add_argument("--intervals", type=int, default=10)
    gen.add_argument("--records-per-interval", type=int, default=150)
    gen.add_argument("--alpha-gen", type=float, default=0.1)
    gen.add_argument("--block-diag", type=float, default=0.8)
    gen.add_argument("--block-offdiag", type=float, default=0.05)
    gen.add_argument("--switch-interval", type=int, default=None,
                     help="permute the block matrix rows from this interval on")
    gen.add_argument("--schedule-file", default=None,
                     help="JSON [{start, matrix}, ...] overriding the flags above")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.add_argument("--truth-out", default=None)
    gen.set_defaults(func=_cmd_generate)

    split = subs.add_parser("split", help="write five-fold dyad masks")
    split.add_argument("--stream", required=True)
    split.add_argument("--folds", type=int, default=5)
    split.add_argument("--validation-fraction", type=float, default=0.5)
    split.add_argument("--seed", type=int, default=0)
    split.add_argument("--out-dir", required=True)
    split.set_defaults(func=_cmd_split)

    run = subs.add_parser("run", help="run one algorithm and its baseline")
    _add_run_flags(run)
    run.set_defaults(func=_cmd_run)

    grid = subs.add_parser("grid", help="validation grid search")
    _add_run_flags(grid)
    grid.add_argument("--grid", action="append", required=True,
                      metavar="NAME=V1,V2,...",
                      help="repeatable; e.g. --grid ess_threshold=4,8,12,16,20")
    grid.add_argument("--summary-out", default=None,
                      help="JSON summary of all grid cells")
    grid.set_defaults(func=_cmd_grid)

    oracle = subs.add_parser("oracle",
                             help="exact predictive by exhaustive enumeration")
    oracle.add_argument("--stream", required=True,
                        help="small edge-list of conditioning records")
    _add_model_flags(oracle)
    oracle.add_argument("--query", nargs=2, required=True, metavar=("FROM", "TO"))
    oracle.set_defaults(func=_cmd_oracle)

    return parser


def _apply_config_file(argv: list) -> list:
    """Splice `key = value` pairs from --config in as flags the real flags win over."""
    if "--config" not in argv:
        return argv
    idx = argv.index("--config")
    if idx + 1 >= len(argv):
        raise ConfigError("--config requires a file path")
    path = argv[idx + 1]
    rest = argv[:idx] + argv[idx + 2:]
    if not rest:
        raise ConfigError("--config must follow a subcommand")
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except FileNotFoundError as exc:
        raise DataError(f"config file not found: {path}") from exc
    injected = []
    for lineno, line in enumerate(lines, start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" in text:
            key, _, value = text.partition("=")
        else:
            parts = text.split(None, 1)
            if len(parts) != 2:
                raise ConfigError(f"{path}:{lineno}: expected 'key value' or "
                                  f"'key = value', got {text!r}")
            key, value = parts
        flag = "--" + key.strip().replace("_", "-")
        injected.extend([flag, value.strip()])
    return [rest[0]] + injected + rest[1:]


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        argv = _apply_config_file(argv)
        args = build_parser().parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
