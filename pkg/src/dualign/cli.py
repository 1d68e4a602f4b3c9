"""Command-line entry point.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from .data import export_openea, generate_synthetic_pair, load_openea
from .model import encode_pair
from .ranking import export_embeddings
from .selftest import run_selftest
from .train import (
    Checkpoint,
    TrainConfig,
    evaluate_checkpoint,
    grid_lambda,
    grid_table,
    load_config,
    run_folds,
    train,
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dualign", description="Dual-space KG entity alignment")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model and write a checkpoint")
    p_train.add_argument("--data", required=True, help="OpenEA-format directory")
    p_train.add_argument("--fold", type=int, default=1)
    p_train.add_argument("--config", help="flat key=value config file")
    p_train.add_argument("--out", required=True, help="checkpoint output path")
    p_train.add_argument("--ablate", choices=["inter", "intra", "both"])

    p_eval = sub.add_parser("evaluate", help="score a checkpoint on test links")
    p_eval.add_argument("--ckpt", required=True)
    p_eval.add_argument("--data", required=True)
    p_eval.add_argument("--fold", type=int, default=1)
    p_eval.add_argument("--csls-k", type=int, dest="csls_k")
    p_eval.add_argument("--no-csls", action="store_true")

    p_folds = sub.add_parser("folds", help="train/test over several folds and average")
    p_folds.add_argument("--data", required=True)
    p_folds.add_argument("--config")
    p_folds.add_argument("--folds", default="1,2,3,4,5", help="comma-separated fold list")

    p_grid = sub.add_parser("grid", help="sweep the contrastive weight lambda")
    p_grid.add_argument("--data", required=True)
    p_grid.add_argument("--config")
    p_grid.add_argument("--fold", type=int, default=1)
    p_grid.add_argument("--lambdas", default="0.1,1,10,100,300,1000")

    p_gen = sub.add_parser("gen-synthetic", help="write a synthetic OpenEA-format pair")
    p_gen.add_argument("--n", type=int, required=True)
    p_gen.add_argument("--branching", type=int, required=True)
    p_gen.add_argument("--noise", type=float, default=0.0)
    p_gen.add_argument("--dropout", type=float, default=0.10)
    p_gen.add_argument("--seed", type=int, required=True)
    p_gen.add_argument("--out", required=True)

    p_export = sub.add_parser("export", help="export fused embeddings for external tools")
    p_export.add_argument("--ckpt", required=True)
    p_export.add_argument("--data", required=True)
    p_export.add_argument("--fold", type=int, default=1)
    p_export.add_argument("--out", required=True)

    sub.add_parser("selftest", help="run the built-in oracle suites")
    return parser


def _load_cfg(path: str | None) -> TrainConfig:
    return load_config(path) if path else TrainConfig()


def _cmd_train(args) -> int:
    cfg = _load_cfg(args.config)
    if args.ablate in ("inter", "both"):
        cfg = dataclasses.replace(cfg, use_inter=False)
    if args.ablate in ("intra", "both"):
        cfg = dataclasses.replace(cfg, use_intra=False)
    pair = load_openea(args.data, args.fold)
    ck = train(pair, cfg)
    ck.save(args.out)
    print(f"checkpoint written to {args.out} (epoch {ck.epoch}, val_mrr {ck.val_mrr:.6f})")
    return 0


def _cmd_evaluate(args) -> int:
    ck = Checkpoint.load(args.ckpt)
    pair = load_openea(args.data, args.fold)
    report = evaluate_checkpoint(ck, pair, use_csls=not args.no_csls, csls_k=args.csls_k)
    print(report.table())
    print(report.metric_lines())
    return 0


def _cmd_folds(args) -> int:
    cfg = _load_cfg(args.config)
    folds = [int(f) for f in args.folds.split(",") if f]
    report = run_folds(args.data, cfg, folds)
    print(report.table())
    return 0


def _cmd_grid(args) -> int:
    cfg = _load_cfg(args.config)
    lambdas = [float(v) for v in args.lambdas.split(",") if v]
    rows = grid_lambda(args.data, cfg, lambdas, fold=args.fold)
    print(grid_table(rows))
    return 0


def _cmd_gen_synthetic(args) -> int:
    pair = generate_synthetic_pair(args.n, args.branching, args.noise, args.seed, dropout=args.dropout)
    export_openea(pair, args.out)
    print(f"synthetic pair written to {args.out} ({len(pair.kg1.triples)} + {len(pair.kg2.triples)} triples)")
    return 0


def _cmd_export(args) -> int:
    from .data import build_graph_tensors

    ck = Checkpoint.load(args.ckpt)
    pair = load_openea(args.data, args.fold)
    enc = encode_pair((build_graph_tensors(pair.kg1), build_graph_tensors(pair.kg2)), ck.params, ck.config.curvature)
    export_embeddings(enc, pair, args.out)
    print(f"embeddings written to {args.out}")
    return 0


def _cmd_selftest(_args) -> int:
    return 0 if run_selftest() else 1


_COMMANDS = {
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "folds": _cmd_folds,
    "grid": _cmd_grid,
    "gen-synthetic": _cmd_gen_synthetic,
    "export": _cmd_export,
    "selftest": _cmd_selftest,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stdout, force=True)
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return int(err.code) if err.code is not None else 2
    try:
        return _COMMANDS[args.command](args)
    except Exception as err:  # one-line diagnostic, nonzero exit
        print(f"error: {err}", file=sys.stderr)
        return 1


def console_main() -> None:
    sys.exit(main())
