"""Command-line entry point: ``infoacq run | score | summarize``.

Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from .experiment import ConfigError, build_data, load_config, read_records, run_experiment, summarize, summary_csv
from .loop import METHODS, MethodConfig, PoolState, score_pool
from .model import load_checkpoint

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2

# Methods without per-candidate scores report the scorer they build on.
SCORER_FOR = {
    "BALD": "BALD",
    "BatchBALD": "BALD",
    "PowerBALD": "BALD",
    "ThompsonBALD": "BALD",
    "UniformTopBALD": "BALD",
    "EIG": "EIG",
    "PowerEIG": "EIG",
    "EvaluationBALD": "EvaluationBALD",
    "PowerEvaluationBALD": "EvaluationBALD",
    "BatchEvaluationBALD": "EvaluationBALD",
}


class _ConfigProblem(Exception):
    pass


def _run(args) -> int:
    cfg = load_config(args.config)
    out = args.out or cfg.output
    results = run_experiment(cfg, seed_offset=args.seed_offset, out=out)
    n = sum(len(r) for r in results.values())
    print(f"wrote {n} records for {len(results)} seeds" + (f" to {out}" if out else ""))
    return EXIT_OK


def _score(args) -> int:
    cfg = load_config(args.config)
    if args.method not in SCORER_FOR:
        raise _ConfigProblem(
            f"method {args.method!r} has no per-candidate scores; choose from "
            + ", ".join(sorted(SCORER_FOR)))
    params = asdict(cfg.method)
    params["tag"] = SCORER_FOR[args.method]
    try:
        method = MethodConfig(**params)
    except ValueError as err:
        raise _ConfigProblem(str(err)) from err
    parent = load_checkpoint(args.checkpoint)
    seed = cfg.seeds[0] + args.seed_offset
    pool, _, initial = build_data(cfg.dataset, seed)
    if parent.arch.input_dim != pool.dim or parent.arch.class_count != pool.class_count:
        raise RuntimeError(
            f"checkpoint expects {parent.arch.input_dim} inputs / {parent.arch.class_count} "
            f"classes, dataset has {pool.dim} / {pool.class_count}")
    state = PoolState.initial(pool, initial)
    model_cfg = replace(cfg.model_config(), schedule=replace(cfg.train, seed=seed))
    art = score_pool(state, method, model_cfg, np.random.default_rng([seed, 0]), parent=parent)
    lines = ["index,score"] + [f"{i},{s:.17g}" for i, s in zip(art.scores.pool_indices, art.scores.scores)]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _summarize(args) -> int:
    records = []
    for path in args.inputs:
        loaded = read_records(path)
        if loaded.partial_tail:
            print(f"warning: {path} ends with an incomplete record; it was skipped", file=sys.stderr)
        records.extend(loaded.records)
    text = summary_csv(summarize(records))
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="infoacq", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress per round")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an active-learning experiment")
    run.add_argument("--config", required=True)
    run.add_argument("--seed-offset", type=int, default=0)
    run.add_argument("--out", help="record file (JSON lines); defaults to the config's output")
    run.set_defaults(func=_run)

    score = sub.add_parser("score", help="score the initial pool with a saved model")
    score.add_argument("--config", required=True)
    score.add_argument("--checkpoint", required=True)
    score.add_argument("--method", required=True, choices=METHODS)
    score.add_argument("--seed-offset", type=int, default=0)
    score.add_argument("--out")
    score.set_defaults(func=_score)

    summ = sub.add_parser("summarize", help="aggregate record files into a CSV")
    summ.add_argument("--in", dest="inputs", nargs="+", required=True)
    summ.add_argument("--out")
    summ.set_defaults(func=_summarize)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, _ConfigProblem) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG if getattr(args, "config", None) == err.filename else EXIT_RUNTIME
    except Exception as err:  # noqa: BLE001 - every other failure maps to the runtime exit code
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
