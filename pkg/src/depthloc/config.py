"""Strict JSON experiment configuration.

Unknown keys are rejected with the offending dotted path; defaults follow
the experimental protocol (batch size 50, 10 folds, beta 0.1, epoch cap
2500).  Configs round-trip losslessly through to_dict/parse.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Any

from .experiment import LrGrid, SweepConfig
from .targets import GFunction, TargetSpec


class ParseError(ValueError):
    def __init__(self, path: str, reason: str):
        self.path = path
        self.reason = reason
        super().__init__(f"{path}: {reason}")


_TOP_KEYS = {"seed", "workers", "target", "sweep"}
_TARGET_KEYS = {"g", "g_params", "scope", "d", "indices", "task", "noise_eps"}
_SWEEP_KEYS = {"n_train", "n_test", "P", "h", "depths", "lr_grid", "folds",
               "batch_size", "epoch_cap", "beta", "seeds", "ntk_baseline"}
_GRID_KEYS = {"lo", "hi", "points_per_decade", "refine_rounds"}


def _check_keys(obj: dict, allowed: set, path: str):
    if not isinstance(obj, dict):
        raise ParseError(path, f"expected an object, got {type(obj).__name__}")
    for key in obj:
        if key not in allowed:
            raise ParseError(f"{path}.{key}" if path else key, "unknown key")


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    workers: int
    target: TargetSpec
    sweep: SweepConfig

    def to_dict(self) -> dict:
        t = self.target
        s = self.sweep
        d: dict[str, Any] = {
            "seed": self.seed,
            "workers": self.workers,
            "target": {
                "g": t.g.kind,
                "scope": t.scope,
                "d": t.d,
                "indices": list(t.indices),
                "task": t.task,
                "noise_eps": t.noise_eps,
            },
            "sweep": {
                "n_train": s.n_train,
                "n_test": s.n_test,
                "depths": list(s.depths),
                "lr_grid": {
                    "lo": s.lr_grid.lo,
                    "hi": s.lr_grid.hi,
                    "points_per_decade": s.lr_grid.points_per_decade,
                    "refine_rounds": s.lr_grid.refine_rounds,
                },
                "folds": s.folds,
                "batch_size": s.batch_size,
                "epoch_cap": s.epoch_cap,
                "beta": s.beta,
                "seeds": list(s.seeds),
                "ntk_baseline": s.ntk_baseline,
            },
        }
        if t.g.params and t.g.kind == "sin_linear":
            d["target"]["g_params"] = list(t.g.params)
        if s.budget_params is not None:
            d["sweep"]["P"] = s.budget_params
        if s.width is not None:
            d["sweep"]["h"] = s.width
    # json round trip gives back exactly this structure
        return d


def config_from_dict(raw: dict) -> ExperimentConfig:
    _check_keys(raw, _TOP_KEYS, "")
    if "target" not in raw:
        raise ParseError("target", "missing")
    if "sweep" not in raw:
        raise ParseError("sweep", "missing")
    seed = raw.get("seed", 0)
    workers = raw.get("workers", 1)

    t = raw["target"]
    _check_keys(t, _TARGET_KEYS, "target")
    try:
        indices = tuple(t["indices"]) if "indices" in t else None
        kind = t.get("g", "monomial")
        if indices is None:
            raise ParseError("target.indices", "missing")
        gfun = GFunction(kind, len(indices),
                         tuple(t.get("g_params", ())))
        target = TargetSpec(
            g=gfun,
            scope=t.get("scope", "local"),
            d=int(t["d"]),
            indices=indices,
            task=t.get("task", "regression"),
            noise_eps=float(t.get("noise_eps", 0.0)),
        )
    except ParseError:
        raise
    except KeyError as e:
        raise ParseError(f"target.{e.args[0]}", "missing") from e
    except (TypeError, ValueError) as e:
        field = "indices" if "indices" in str(e) or "k=" in str(e) else "g"
        raise ParseError(f"target.{field}", str(e)) from e

    s = raw["sweep"]
    _check_keys(s, _SWEEP_KEYS, "sweep")
    g = s.get("lr_grid", {})
    _check_keys(g, _GRID_KEYS, "sweep.lr_grid")
    try:
        grid = LrGrid(float(g.get("lo", 1e-3)), float(g.get("hi", 1.0)),
                      int(g.get("points_per_decade", 4)),
                      int(g.get("refine_rounds", 2)))
    except ValueError as e:
        raise ParseError("sweep.lr_grid", str(e)) from e
    try:
        sweep = SweepConfig(
            target=target,
            n_train=int(s["n_train"]),
            n_test=int(s.get("n_test", 100_000)),
            depths=tuple(s.get("depths", [1])),
            budget_params=int(s["P"]) if "P" in s else None,
            width=int(s["h"]) if "h" in s else None,
            lr_grid=grid,
            folds=int(s.get("folds", 10)),
            batch_size=int(s.get("batch_size", 50)),
            epoch_cap=int(s.get("epoch_cap", 2500)),
            beta=float(s.get("beta", 0.1)),
            seeds=tuple(s.get("seeds", [0, 1, 2])),
            base_seed=int(seed),
            ntk_baseline=bool(s.get("ntk_baseline", True)),
            workers=int(workers),
        )
    except KeyError as e:
        raise ParseError(f"sweep.{e.args[0]}", "missing") from e
    except ValueError as e:
        raise ParseError("sweep", str(e)) from e
    return ExperimentConfig(int(seed), int(workers), target, sweep)


def parse_config(path: str) -> ExperimentConfig:
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    with open(path) as f:
        try:
            raw = json.load(f)
        except json.JSONDecodeError as e:
            raise ParseError(path, f"invalid JSON: {e}") from e
    cfg = config_from_dict(raw)
    workers = os.environ.get("DLB_WORKERS")
    if workers is not None:
        cfg = ExperimentConfig(cfg.seed, int(workers), cfg.target,
                               SweepConfig(**{**cfg.sweep.__dict__,
                                              "workers": int(workers)}))
    return cfg
