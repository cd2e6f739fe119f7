"""Experiment orchestration: learning-rate search, depth sweeps, lr sweeps.

Every cell of a sweep is a pure function of (config, seed): datasets,
initializations and shuffles all come from streams derived with fixed tags,
so reruns are bit-identical and independent cells can be farmed out to
worker processes without changing the results.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .numerics import RngStream, derive_stream
from .targets import Dataset, TargetSpec, make_dataset
from .network import (Architecture, TrainCaps, init_model, predict,
                      predict_sign, sgd_train, width_for_depth,
                      STOP_LOSS, STOP_ACC, STOP_DIVERGED)
from .ntk import KernelSpec, ntk_fit, ntk_predict

# stream tags
_T_DATA = 11
_T_TEST = 12
_T_FOLDS = 13
_T_INIT = 14
_T_SHUFFLE = 15


class AllDiverged(RuntimeError):
    """Every learning rate on the search grid diverged."""


@dataclass(frozen=True)
class LrGrid:
    lo: float
    hi: float
    points_per_decade: int = 4
    refine_rounds: int = 2

    def __post_init__(self):
        if not (0 < self.lo <= self.hi):
            raise ValueError("need 0 < lo <= hi")
        if self.points_per_decade < 1 or self.refine_rounds < 0:
            raise ValueError("bad grid resolution")

    def points(self) -> list[float]:
        n = int(np.floor(np.log10(self.hi / self.lo) * self.points_per_decade
                         + 1e-9)) + 1
        pts = [self.lo * 10.0 ** (i / self.points_per_decade) for i in range(n)]
        if pts[-1] < self.hi * (1 - 1e-9):
            pts.append(self.hi)
        return pts


@dataclass(frozen=True)
class SweepConfig:
    target: TargetSpec
    n_train: int
    n_test: int = 100_000
    depths: tuple = (1,)
    budget_params: Optional[int] = None  # depth sweep: fixed P
    width: Optional[int] = None          # lr sweep: fixed h
    lr_grid: LrGrid = LrGrid(1e-3, 1.0)
    folds: int = 10
    batch_size: int = 50
    epoch_cap: int = 2500
    beta: float = 0.1  # NTK baseline bias scale
    seeds: tuple = (0, 1, 2)
    base_seed: int = 0
    ntk_baseline: bool = True
    workers: int = 1

    def __post_init__(self):
        if not self.depths:
            raise ValueError("depths must be non-empty")
        if not self.seeds:
            raise ValueError("seeds must be non-empty")
        if self.folds < 2:
            raise ValueError("folds must be >= 2")
        object.__setattr__(self, "depths", tuple(int(L) for L in self.depths))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))

    def width_at(self, L: int) -> int:
        if self.width is not None:
            return self.width
        if self.budget_params is None:
            raise ValueError("config needs either a parameter budget or a width")
        return width_for_depth(self.budget_params, self.target.d, L)


@dataclass(frozen=True)
class RunRecord:
    kind: str  # "sgd" or "ntk"
    depth: int
    width: int
    param_count: int
    learning_rate: float
    seed: int
    epochs_run: int
    stop_reason: str
    train_metric: float
    test_metric: float
    wall_time: float = 0.0

    def sort_key(self):
        return (self.kind, self.depth, self.learning_rate, self.seed)


def test_error(predict_fn: Callable[[np.ndarray], np.ndarray],
               testset: Dataset) -> float:
    """Mean squared error against the noiseless target values."""
    f = testset.spec.evaluate(testset.inputs)
    pred = np.asarray(predict_fn(testset.inputs), dtype=np.float64)
    return float(np.mean((pred - f) ** 2))


def misclassification_rate(predict_sign_fn, testset: Dataset) -> float:
    pred = np.asarray(predict_sign_fn(testset.inputs))
    return float(np.mean(pred != testset.labels))


def kfold_split(n: int, folds: int, rng: RngStream):
    """Random permutation cut into ``folds`` near-equal validation blocks."""
    if folds < 2:
        raise ValueError("folds must be >= 2")
    if n < folds:
        raise ValueError("need at least one sample per fold")
    perm = rng.permutation(n)
    blocks = np.array_split(perm, folds)
    out = []
    for i, val in enumerate(blocks):
        train = np.concatenate([blocks[j] for j in range(folds) if j != i])
        out.append((train, val))
    return out


def _eta_tag(eta: float) -> int:
    """Stable integer tag for a learning rate, for stream derivation."""
    return int(np.float64(eta).view(np.uint64))


def _validation_metric(dataset: Dataset, arch: Architecture, eta: float,
                       train_idx, val_idx, fold: int, cfg: SweepConfig) -> float:
    """Train on one fold's split at reduced cap; +inf marks divergence."""
    classification = dataset.spec.task == "classification"
    caps = TrainCaps(epoch_cap=max(1, cfg.epoch_cap // 5),
                     loss_threshold=None if classification else 1e-4,
                     accuracy_threshold=1.0 if classification else None)
    tag = _eta_tag(eta)
    base = RngStream(cfg.base_seed, 0)
    model = init_model(arch, base.child(_T_INIT, arch.L, tag, fold))
    trainsub = dataset.subset(train_idx)
    model, report = sgd_train(model, trainsub, eta, cfg.batch_size, caps,
                              base.child(_T_SHUFFLE, arch.L, tag, fold))
    if report.stop_reason == STOP_DIVERGED:
        return float("inf")
    Xv, yv = dataset.inputs[val_idx], dataset.labels[val_idx]
    if classification:
        return float(np.mean(predict_sign(model, Xv) != yv))
    val = float(np.mean((predict(model, Xv) - yv) ** 2))
    return val if np.isfinite(val) else float("inf")


def _cv_cell(args):
    dataset, arch, eta, splits_i, fold, cfg = args
    train_idx, val_idx = splits_i
    return _validation_metric(dataset, arch, eta, train_idx, val_idx, fold, cfg)


def lr_search(dataset: Dataset, arch: Architecture, cfg: SweepConfig,
              pool=None):
    """Coarse-to-fine log-grid search with k-fold cross validation.

    Returns (best_eta, table) where table is a sorted list of
    (eta, mean validation metric) over every learning rate evaluated.
    Diverged folds score +inf; ties break toward the smaller eta.
    """
    splits = kfold_split(dataset.n, cfg.folds,
                         RngStream(cfg.base_seed, derive_stream(0, _T_FOLDS)))
    scores: dict[float, float] = {}

    def evaluate(etas):
        todo = [e for e in etas if not any(abs(e - s) <= 1e-9 * s for s in scores)]
        tasks = [(dataset, arch, eta, splits[f], f, cfg)
                 for eta in todo for f in range(cfg.folds)]
        if pool is not None:
            results = list(pool.map(_cv_cell, tasks, chunksize=1))
        else:
            results = [_cv_cell(t) for t in tasks]
        for i, eta in enumerate(todo):
            vals = results[i * cfg.folds:(i + 1) * cfg.folds]
            scores[eta] = float(np.mean(vals))

    def incumbent():
        finite = [(e, m) for e, m in scores.items() if np.isfinite(m)]
        if not finite:
            raise AllDiverged("all learning rates on the grid diverged")
        return min(finite, key=lambda em: (em[1], em[0]))[0]

    grid = cfg.lr_grid
    evaluate(grid.points())
    for _ in range(grid.refine_rounds):
        center = incumbent()
        fine = LrGrid(center / np.sqrt(10.0), center * np.sqrt(10.0),
                      grid.points_per_decade * 2, 0)
        evaluate(fine.points())
    best = incumbent()
    table = sorted(scores.items())
    return best, table


def _train_cell(args):
    """One (depth, seed) training run; returns a RunRecord."""
    cfg, L, seed, eta, testset = args
    t0 = time.perf_counter()
    h = cfg.width_at(L)
    arch = Architecture(cfg.target.d, L, h, init="glorot")
    trainset = make_dataset(cfg.target, cfg.n_train,
                            RngStream(cfg.base_seed, derive_stream(0, _T_DATA, seed)))
    classification = cfg.target.task == "classification"
    caps = TrainCaps(epoch_cap=cfg.epoch_cap,
                     loss_threshold=None if classification else 1e-4,
                     accuracy_threshold=1.0 if classification else None)
    base = RngStream(cfg.base_seed, 0)
    model = init_model(arch, base.child(_T_INIT, L, seed))
    model, report = sgd_train(model, trainset, eta, cfg.batch_size, caps,
                              base.child(_T_SHUFFLE, L, seed))
    if classification:
        train_metric = report.loss_history[-1][1] if report.loss_history else 0.0
        test_metric = misclassification_rate(lambda X: predict_sign(model, X),
                                             testset)
    else:
        train_metric = report.final_train_loss
        test_metric = test_error(lambda X: predict(model, X), testset)
    if report.stop_reason == STOP_DIVERGED:
        test_metric = float("inf")
    return RunRecord("sgd", L, h, arch.param_count, eta, seed,
                     report.epochs_run, report.stop_reason,
                     train_metric, test_metric,
                     time.perf_counter() - t0)


def _ntk_cell(args):
    cfg, L, seed, testset = args
    t0 = time.perf_counter()
    h = cfg.width_at(L)
    arch = Architecture(cfg.target.d, L, h, init="glorot")
    trainset = make_dataset(cfg.target, cfg.n_train,
                            RngStream(cfg.base_seed, derive_stream(0, _T_DATA, seed)))
    spec = KernelSpec(L, cfg.beta, cfg.target.d)
    model = ntk_fit(trainset, spec)
    pred = lambda X: ntk_predict(model, X)
    if cfg.target.task == "classification":
        test_metric = misclassification_rate(
            lambda X: np.where(pred(X) >= 0, 1.0, -1.0), testset)
        train_metric = float(np.mean(
            np.where(pred(trainset.inputs) >= 0, 1.0, -1.0) == trainset.labels))
    else:
        test_metric = test_error(pred, testset)
        train_metric = float(np.mean(
            (pred(trainset.inputs) - trainset.labels) ** 2))
    return RunRecord("ntk", L, h, arch.param_count, 0.0, seed, 0, "ntk",
                     train_metric, test_metric, time.perf_counter() - t0)


def _make_testset(cfg: SweepConfig) -> Dataset:
    test_spec = replace(cfg.target, noise_eps=0.0)
    return make_dataset(test_spec, cfg.n_test,
                        RngStream(cfg.base_seed, derive_stream(0, _T_TEST)))


def _run_cells(cells, fn, workers):
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, cells, chunksize=1))
    return [fn(c) for c in cells]


def depth_sweep(cfg: SweepConfig) -> list[RunRecord]:
    """Train at each depth under a fixed parameter budget with a tuned eta.

    The learning rate is tuned once per depth (k-fold CV on the first seed's
    training set), every seed is then trained at the tuned eta, and the NTK
    baseline at the same depth is fit per seed when enabled.  A diverged
    cell is recorded, never fatal.  Records come back canonically sorted.
    """
    if cfg.budget_params is None:
        raise ValueError("depth_sweep needs a fixed parameter budget")
    testset = _make_testset(cfg)
    pool = ProcessPoolExecutor(max_workers=cfg.workers) if cfg.workers > 1 else None
    try:
        best_etas = {}
        for L in cfg.depths:
            arch = Architecture(cfg.target.d, L, cfg.width_at(L), init="glorot")
            cv_set = make_dataset(
                cfg.target, cfg.n_train,
                RngStream(cfg.base_seed, derive_stream(0, _T_DATA, cfg.seeds[0])))
            best_etas[L], _ = lr_search(cv_set, arch, cfg, pool=pool)
    finally:
        if pool is not None:
            pool.shutdown()
    cells = [(cfg, L, s, best_etas[L], testset)
             for L in cfg.depths for s in cfg.seeds]
    records = _run_cells(cells, _train_cell, cfg.workers)
    if cfg.ntk_baseline:
        ntk_cells = [(cfg, L, s, testset) for L in cfg.depths for s in cfg.seeds]
        records += _run_cells(ntk_cells, _ntk_cell, cfg.workers)
    return sorted(records, key=RunRecord.sort_key)


def lr_sweep(cfg: SweepConfig) -> list[RunRecord]:
    """Train at every grid learning rate at fixed width, no cross validation.

    Learning rates where the stopping threshold is never met within the
    epoch cap stay in the output flagged by their stop_reason, mirroring the
    "maximum learning rate" cutoff of the lr-dependence figures.
    """
    if cfg.width is None:
        raise ValueError("lr_sweep needs a fixed width")
    testset = _make_testset(cfg)
    etas = cfg.lr_grid.points()
    cells = [(cfg, L, s, eta, testset)
             for L in cfg.depths for eta in etas for s in cfg.seeds]
    records = _run_cells(cells, _train_cell, cfg.workers)
    if cfg.ntk_baseline:
        ntk_cells = [(cfg, L, s, testset) for L in cfg.depths for s in cfg.seeds]
        records += _run_cells(ntk_cells, _ntk_cell, cfg.workers)
    return sorted(records, key=RunRecord.sort_key)


def feasible(record: RunRecord) -> bool:
    """True when the run met its stopping threshold (plot-worthy cell)."""
    return record.stop_reason in (STOP_LOSS, STOP_ACC, "ntk")
