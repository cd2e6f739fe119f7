"""Command-line entry point.

Subcommands:
  gen      write a dataset file (spec + seed; --materialize adds raw arrays)
  train    one SGD training run at a given depth / learning rate / seed
  ntk      fit and evaluate the NTK baseline at a given depth
  lr-scan  learning-rate sweep at fixed width
  sweep    depth sweep at fixed parameter budget
  report   aggregate result CSVs into mean +- stderr per cell

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .config import ExperimentConfig, ParseError, parse_config
from .experiment import (AllDiverged, depth_sweep, lr_sweep, _train_cell,
                         _ntk_cell, _make_testset)
from .numerics import SingularSystem
from .results import read_records, write_report, write_results
from .targets import make_dataset
from .numerics import RngStream, derive_stream


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="depthloc")
    sub = p.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="write a dataset file")
    gen.add_argument("--config", required=True)
    gen.add_argument("--out", required=True)
    gen.add_argument("--materialize", action="store_true",
                     help="also write the raw sample arrays")

    tr = sub.add_parser("train", help="single SGD run")
    tr.add_argument("--config", required=True)
    tr.add_argument("--depth", type=int, required=True)
    tr.add_argument("--lr", type=float, required=True)
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--out", required=True)

    nt = sub.add_parser("ntk", help="fit and evaluate the NTK baseline")
    nt.add_argument("--config", required=True)
    nt.add_argument("--depth", type=int, required=True)
    nt.add_argument("--seed", type=int, default=0)
    nt.add_argument("--out", required=True)

    ls = sub.add_parser("lr-scan", help="learning-rate sweep at fixed width")
    ls.add_argument("--config", required=True)
    ls.add_argument("--out", required=True)

    sw = sub.add_parser("sweep", help="depth sweep at fixed parameter budget")
    sw.add_argument("--config", required=True)
    sw.add_argument("--out", required=True)

    rp = sub.add_parser("report", help="aggregate result CSVs")
    rp.add_argument("csvs", nargs="+")
    rp.add_argument("--out", required=True)
    return p


def _results_path(out: str) -> str:
    import os
    if out.endswith(".csv"):
        return out
    os.makedirs(out, exist_ok=True)
    return os.path.join(out, "results.csv")


def _cmd_gen(cfg: ExperimentConfig, args) -> int:
    payload = {
        "target": cfg.to_dict()["target"],
        "seed": cfg.seed,
        "n": cfg.sweep.n_train,
    }
    if args.materialize:
        ds = make_dataset(cfg.target, cfg.sweep.n_train,
                          RngStream(cfg.seed, derive_stream(0, 11, cfg.sweep.seeds[0])))
        payload["inputs"] = ds.inputs.tolist()
        payload["labels"] = ds.labels.tolist()
        payload["resample_count"] = ds.resample_count
    with open(args.out, "w") as f:
        json.dump(payload, f)
    return 0


def _cmd_train(cfg: ExperimentConfig, args) -> int:
    testset = _make_testset(cfg.sweep)
    rec = _train_cell((cfg.sweep, args.depth, args.seed, args.lr, testset))
    write_results([rec], _results_path(args.out), cfg.to_dict())
    return 0


def _cmd_ntk(cfg: ExperimentConfig, args) -> int:
    testset = _make_testset(cfg.sweep)
    rec = _ntk_cell((cfg.sweep, args.depth, args.seed, testset))
    write_results([rec], _results_path(args.out), cfg.to_dict())
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "report":
            records = []
            for path in args.csvs:
                records.extend(read_records(path))
            write_report(records, args.out)
            return 0
        cfg = parse_config(args.config)
        if args.command == "gen":
            return _cmd_gen(cfg, args)
        if args.command == "train":
            return _cmd_train(cfg, args)
        if args.command == "ntk":
            return _cmd_ntk(cfg, args)
        if args.command == "lr-scan":
            records = lr_sweep(cfg.sweep)
            write_results(records, _results_path(args.out), cfg.to_dict())
            return 0
        if args.command == "sweep":
            records = depth_sweep(cfg.sweep)
            write_results(records, _results_path(args.out), cfg.to_dict())
            return 0
        print(f"unknown command {args.command}", file=sys.stderr)
        return 1
    except (ParseError, FileNotFoundError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    except (AllDiverged, SingularSystem, ValueError, OSError) as e:
        print(f"runtime failure: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
