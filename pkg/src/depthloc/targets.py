"""Synthetic target functions and dataset generation.

A target is a function of a small number k of input coordinates, applied
either to one fixed index set ("local") or summed cyclically over all d
offsets with periodic wrap and a 1/sqrt(d) normalization ("global").
Inputs are always i.i.d. standard Gaussian vectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .numerics import RngStream

# sub-stream tags inside make_dataset
_INPUTS = 0
_NOISE = 1

G_KINDS = ("monomial", "sin_linear", "tanh_sin", "custom")
SCOPES = ("local", "global")
TASKS = ("regression", "classification")


class DimensionMismatch(ValueError):
    pass


@dataclass(frozen=True)
class GFunction:
    """A k-ary component function g with E[g] = 0 under standard normals.

    Built-in kinds:
      monomial   g(u) = u_1 * u_2 * ... * u_k
      sin_linear g(u) = sin(c . u), default coefficients (2, 1)
      tanh_sin   g(u) = tanh(u_1) * sin(u_2)
      custom     arbitrary callable; zero-mean must be checked with
                 estimate_g_mean before use in datasets.
    """

    kind: str
    k: int
    params: tuple = ()
    fn: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if self.kind not in G_KINDS:
            raise ValueError(f"unknown g kind {self.kind!r}")
        if self.k < 1:
            raise ValueError("arity k must be >= 1")
        if self.kind == "sin_linear":
            coeffs = self.params or (2.0, 1.0)
            if len(coeffs) != self.k:
                raise ValueError("sin_linear needs one coefficient per argument")
            object.__setattr__(self, "params", tuple(float(c) for c in coeffs))
        if self.kind == "tanh_sin" and self.k != 2:
            raise ValueError("tanh_sin is binary")
        if self.kind == "custom" and self.fn is None:
            raise ValueError("custom g needs a callable")

    def __call__(self, u: np.ndarray) -> np.ndarray:
        """Evaluate on an array of shape (..., k)."""
        u = np.asarray(u, dtype=np.float64)
        if u.shape[-1] != self.k:
            raise DimensionMismatch(
                f"g expects {self.k} arguments, got {u.shape[-1]}")
        if self.kind == "monomial":
            return np.prod(u, axis=-1)
        if self.kind == "sin_linear":
            return np.sin(u @ np.asarray(self.params))
        if self.kind == "tanh_sin":
            return np.tanh(u[..., 0]) * np.sin(u[..., 1])
        return np.asarray(self.fn(u), dtype=np.float64)


def monomial(k: int) -> GFunction:
    return GFunction("monomial", k)


@dataclass(frozen=True)
class TargetSpec:
    """Full description of a target function plus labeling rule.

    ``indices`` are 1-based, strictly increasing, matching the written
    definitions f(x) = g(x_{i1},...,x_{ik}) (local) and
    f(x) = d^{-1/2} sum_j g(x_{j+i1},...,x_{j+ik}) with periodic wrap
    (global, where the indices act as offsets).
    """

    g: GFunction
    scope: str
    d: int
    indices: tuple
    task: str = "regression"
    noise_eps: float = 0.0

    def __post_init__(self):
        if self.scope not in SCOPES:
            raise ValueError(f"unknown scope {self.scope!r}")
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        idx = tuple(int(i) for i in self.indices)
        object.__setattr__(self, "indices", idx)
        if len(idx) != self.g.k:
            raise ValueError(f"need {self.g.k} indices, got {len(idx)}")
        if self.g.k > self.d:
            raise ValueError(f"k={self.g.k} exceeds d={self.d}")
        if any(i < 1 or i > self.d for i in idx):
            raise ValueError(f"indices must lie in [1, {self.d}]")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError("indices must be strictly increasing")
        if self.noise_eps < 0:
            raise ValueError("noise_eps must be >= 0")
        if self.task == "classification" and self.noise_eps != 0:
            raise ValueError("classification targets are noiseless")

    @property
    def k(self) -> int:
        return self.g.k

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        """Noiseless target values for a batch of inputs, shape (n, d) -> (n,)."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.d:
            raise DimensionMismatch(
                f"inputs have dimension {X.shape[1]}, spec wants {self.d}")
        idx0 = np.asarray(self.indices) - 1
        if self.scope == "local":
            return self.g(X[:, idx0])
        # global: j ascending, fixed order, so reruns are bit-identical
        cols = (np.arange(self.d)[:, None] + idx0[None, :]) % self.d  # (d, k)
        terms = self.g(X[:, cols])  # (n, d)
        return terms.sum(axis=1) / np.sqrt(self.d)


def local_eval(spec: TargetSpec, x: np.ndarray) -> float:
    if spec.scope != "local":
        raise ValueError("spec is not local")
    return float(spec.evaluate(np.asarray(x)[None, :])[0])


def global_eval(spec: TargetSpec, x: np.ndarray) -> float:
    if spec.scope != "global":
        raise ValueError("spec is not global")
    return float(spec.evaluate(np.asarray(x)[None, :])[0])


def estimate_g_mean(g: GFunction, n_samples: int,
                    rng: RngStream) -> tuple[float, float]:
    """Monte-Carlo estimate of E[g] under i.i.d. standard normals."""
    if n_samples < 100:
        raise ValueError("need at least 100 samples")
    vals = g(rng.normal(n_samples, g.k))
    mean = float(np.mean(vals))
    stderr = float(np.std(vals, ddof=1) / np.sqrt(n_samples))
    return mean, stderr


@dataclass(frozen=True)
class Dataset:
    """Sampled inputs plus labels, with enough provenance to regenerate."""

    inputs: np.ndarray
    labels: np.ndarray
    spec: TargetSpec
    seed: int
    stream_id: int
    resample_count: int = 0

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    def subset(self, idx: np.ndarray) -> "Dataset":
        return replace(self, inputs=self.inputs[idx], labels=self.labels[idx])


def make_dataset(spec: TargetSpec, n: int, rng: RngStream) -> Dataset:
    """Sample n Gaussian inputs and attach labels per the spec.

    Regression: y = f(x) + noise_eps * xi, xi ~ N(0,1) drawn from a separate
    sub-stream so the same seed with a different noise_eps reuses identical
    inputs.  Classification: y = sign(f(x)); the measure-zero tie f(x) = 0 is
    resolved by resampling the offending input point (count recorded).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if spec.g.kind == "custom":
        mean, stderr = estimate_g_mean(spec.g, 100_000, rng.child(99))
        if abs(mean) > 4.0 * stderr + 1e-12:
            raise ValueError(
                f"custom g violates the zero-mean assumption: "
                f"E[g] ~ {mean:.4g} +- {stderr:.2g}")
    x_rng = rng.child(_INPUTS)
    X = x_rng.normal(n, spec.d)
    f = spec.evaluate(X)
    resamples = 0
    if spec.task == "classification":
        while True:
            ties = np.flatnonzero(f == 0.0)
            if ties.size == 0:
                break
            for i in ties:
                X[i] = x_rng.normal(spec.d)
                resamples += 1
            f[ties] = spec.evaluate(X[ties])
        labels = np.where(f > 0, 1.0, -1.0)
    else:
        labels = f
        if spec.noise_eps > 0:
            labels = f + spec.noise_eps * rng.child(_NOISE).normal(n)
        elif spec.noise_eps == 0:
            # still burn no state: noise stream untouched keeps inputs shared
            pass
    return Dataset(X, labels, spec, rng.seed, rng.stream_id, resamples)
