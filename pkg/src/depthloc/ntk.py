"""Exact infinite-width NTK for deep ReLU networks with bias scale beta.

The kernel is evaluated by the closed-form covariance recursion

    S^(0)(x,x') = x.x'/d + beta^2
    S^(l)      = sqrt(det L^(l))/pi
                 + (S^(l-1)/pi) * (pi/2 + arctan(S^(l-1)/sqrt(det L^(l))))
                 + beta^2
    Sdot^(l)   = (1 + (2/pi) arctan(S^(l-1)/sqrt(det L^(l)))) / 2

with det L^(l) formed from the level-(l-1) diagonal and off-diagonal values,
and

    Theta^(L) = sum_{l=1}^{L+1} S^(l-1) * prod_{l'=l}^{L+1} Sdot^(l')

using the convention Sdot^(L+1) = 1 (the output layer is linear).  On the
diagonal S^(l)(x,x) = |x|^2/d + (l+1) beta^2 exactly.  A bias-free angle
recursion provides an independent fast path for beta = 0, and a finite-width
Monte-Carlo estimator serves as an oracle for both.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .numerics import RngStream, spd_solve
from .targets import Dataset


class ZeroVector(ValueError):
    pass


@dataclass(frozen=True)
class KernelSpec:
    L: int
    beta: float
    d: int

    def __post_init__(self):
        if self.L < 1:
            raise ValueError("L must be >= 1")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")


@dataclass
class RecursionTrace:
    """Per-level values of the covariance recursion for one input pair."""

    sigma_xy: list   # S^(0..L)(x, x')
    sigma_xx: list   # S^(0..L)(x, x)
    sigma_yy: list   # S^(0..L)(x', x')
    sigma_dot: list  # Sdot^(1..L)(x, x'); Sdot^(L+1) = 1 by convention


def _level_step(sxx, sxy, syy, beta2):
    """One recursion level, elementwise on arrays.

    det L is clamped at 0 so the correlation never leaves [-1, 1]; arctan2
    turns the degenerate det -> 0+ case into sign(S) * pi/2, which is exactly
    the x = x' limit, so the recursion is total.
    """
    det = np.maximum(sxx * syy - sxy * sxy, 0.0)
    root = np.sqrt(det)
    ang = np.arctan2(sxy, root)
    new_sxy = root / np.pi + (sxy / np.pi) * (np.pi / 2 + ang) + beta2
    sdot = 0.5 * (1.0 + (2.0 / np.pi) * ang)
    return new_sxy, sdot


def sigma_recursion(x: np.ndarray, xp: np.ndarray,
                    spec: KernelSpec) -> RecursionTrace:
    x = np.asarray(x, dtype=np.float64)
    xp = np.asarray(xp, dtype=np.float64)
    if x.shape != xp.shape or x.shape[0] != spec.d:
        raise ValueError("inputs must both have dimension d")
    beta2 = spec.beta ** 2
    sxx = float(x @ x) / spec.d + beta2
    syy = float(xp @ xp) / spec.d + beta2
    sxy = float(x @ xp) / spec.d + beta2
    trace = RecursionTrace([sxy], [sxx], [syy], [])
    for _ in range(spec.L):
        sxy, sdot = _level_step(sxx, sxy, syy, beta2)
        sxx = sxx + beta2
        syy = syy + beta2
        trace.sigma_xy.append(float(sxy))
        trace.sigma_xx.append(float(sxx))
        trace.sigma_yy.append(float(syy))
        trace.sigma_dot.append(float(sdot))
    return trace


def _theta_from_products(sxx, sxy, syy, L: int, beta2: float):
    """NTK from level-0 covariance values, elementwise on arrays."""
    theta = sxy
    for _ in range(L):
        sxy, sdot = _level_step(sxx, sxy, syy, beta2)
        sxx = sxx + beta2
        syy = syy + beta2
        theta = theta * sdot + sxy
    return theta


def ntk_kernel(x: np.ndarray, xp: np.ndarray, spec: KernelSpec) -> float:
    x = np.asarray(x, dtype=np.float64)
    xp = np.asarray(xp, dtype=np.float64)
    beta2 = spec.beta ** 2
    sxx = float(x @ x) / spec.d + beta2
    syy = float(xp @ xp) / spec.d + beta2
    sxy = float(x @ xp) / spec.d + beta2
    return float(_theta_from_products(sxx, sxy, syy, spec.L, beta2))


def ntk_kernel_bias_free(x: np.ndarray, xp: np.ndarray, L: int) -> float:
    """Bias-free NTK via the angle recursion.

    S^(l) = (|x||x'|/d) cos t^(l), Sdot^(l) = 1 - t^(l-1)/pi, with
    cos t^(l) = (sin t^(l-1) + (pi - t^(l-1)) cos t^(l-1)) / pi and t^(0)
    the angle between x and x'.  Independent of the general recursion; used
    as a cross-check.
    """
    x = np.asarray(x, dtype=np.float64)
    xp = np.asarray(xp, dtype=np.float64)
    d = x.shape[0]
    nx = float(np.linalg.norm(x))
    ny = float(np.linalg.norm(xp))
    if nx == 0.0 or ny == 0.0:
        raise ZeroVector("bias-free kernel is undefined for zero inputs")
    cos_t = float(np.clip(x @ xp / (nx * ny), -1.0, 1.0))
    t = float(np.arccos(cos_t))
    amp = nx * ny / d
    theta = amp * cos_t
    for _ in range(L):
        sdot = 1.0 - t / np.pi
        cos_t = (np.sin(t) + (np.pi - t) * np.cos(t)) / np.pi
        t = float(np.arccos(np.clip(cos_t, -1.0, 1.0)))
        theta = theta * sdot + amp * cos_t
    return float(theta)


def gram(X: np.ndarray, spec: KernelSpec) -> np.ndarray:
    """NTK Gram matrix, exactly symmetric (upper triangle mirrored)."""
    X = np.asarray(X, dtype=np.float64)
    beta2 = spec.beta ** 2
    G = X @ X.T / spec.d + beta2
    diag = np.diag(G).copy()
    K = _theta_from_products(diag[:, None], G, diag[None, :], spec.L, beta2)
    return np.triu(K) + np.triu(K, 1).T


def gram_cross(Xa: np.ndarray, Xb: np.ndarray, spec: KernelSpec) -> np.ndarray:
    """Cross kernel matrix Theta(Xa[i], Xb[j]), shape (len(Xa), len(Xb))."""
    Xa = np.atleast_2d(np.asarray(Xa, dtype=np.float64))
    Xb = np.atleast_2d(np.asarray(Xb, dtype=np.float64))
    beta2 = spec.beta ** 2
    sxx = np.sum(Xa * Xa, axis=1) / spec.d + beta2
    syy = np.sum(Xb * Xb, axis=1) / spec.d + beta2
    sxy = Xa @ Xb.T / spec.d + beta2
    return _theta_from_products(sxx[:, None], sxy, syy[None, :], spec.L, beta2)


@dataclass
class NtkModel:
    """Kernel-regression predictor: alpha = (K + jitter I)^-1 y."""

    spec: KernelSpec
    X: np.ndarray
    alpha: np.ndarray
    jitter_used: float
    residual: float


def ntk_fit(dataset: Dataset, spec: KernelSpec,
            base_jitter: Optional[float] = None) -> NtkModel:
    """Assemble the Gram matrix and solve for the dual coefficients.

    Classification datasets are handled by regressing the +-1 labels.
    """
    K = gram(dataset.inputs, spec)
    y = np.asarray(dataset.labels, dtype=np.float64)
    alpha, jitter = spd_solve(K, y, base_jitter)
    ynorm = float(np.linalg.norm(y))
    resid = float(np.linalg.norm(K @ alpha - y)) / max(ynorm, 1e-300)
    return NtkModel(spec, dataset.inputs.copy(), alpha, jitter, resid)


def ntk_predict(model: NtkModel, x: np.ndarray) -> np.ndarray:
    """Kernel predictions; accepts a single vector or a batch."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    out = gram_cross(np.atleast_2d(x), model.X, model.spec) @ model.alpha
    return float(out[0]) if single else out


def _weight_gain(layer: int, fan_in: int) -> float:
    """Squared scale of layer ``layer`` (1-based) in the NTK parameterization.

    The input layer carries 1/d so the preactivation covariance starts at
    x.x'/d + beta^2; deeper layers carry 2/fan_in, the ReLU-compensating
    gain that keeps the covariance recursion at S^(l) = 2 E[phi phi] + beta^2.
    """
    return (1.0 if layer == 1 else 2.0) / fan_in


def _mc_forward(weights, biases, beta, x):
    """Forward pass of one sampled network; returns activations and masks."""
    z = x
    zs = [z]
    masks = []
    for l in range(len(biases)):
        fan_in = z.shape[0]
        a = np.sqrt(_weight_gain(l + 1, fan_in)) * (weights[l] @ z) \
            + beta * biases[l]
        mask = a > 0
        z = np.where(mask, a, 0.0)
        zs.append(z)
        masks.append(mask)
    return zs, masks


def _mc_grad_inner(weights, biases, beta, sizes, x, xp):
    """Gradient-feature inner product for one sampled network.

    Gradients with respect to the scaled parameters are rank-one per layer,
    so the full inner product reduces to per-layer dot products of the
    activations and the backpropagated signals; no gradient is materialized.
    """
    L = len(biases)
    h = sizes[-2]
    zx, mx = _mc_forward(weights, biases, beta, x)
    zy, my = _mc_forward(weights, biases, beta, xp)
    # output-layer weight and bias contribution
    total = (2.0 / h) * float(zx[L] @ zy[L]) + beta * beta
    w_out = np.sqrt(2.0 / h) * weights[L].ravel()
    dx = w_out * mx[L - 1]
    dy = w_out * my[L - 1]
    for l in range(L - 1, -1, -1):
        gain = _weight_gain(l + 1, sizes[l])
        dd = float(dx @ dy)
        total += gain * dd * float(zx[l] @ zy[l])
        total += beta * beta * dd
        if l > 0:
            scale = np.sqrt(gain)
            dx = scale * (weights[l].T @ dx) * mx[l - 1]
            dy = scale * (weights[l].T @ dy) * my[l - 1]
    return total


def mc_ntk_estimate_pairs(pairs, spec: KernelSpec, width: int, n_init: int,
                          rng: RngStream):
    """Monte-Carlo NTK estimates for several input pairs at once.

    All pairs share the same sampled networks, so the cost of drawing the
    (large) random weight matrices is paid once per initialization.  Returns
    a list of (mean, stderr) tuples, one per pair.
    """
    if width < 64:
        raise ValueError("width must be >= 64")
    if n_init < 8:
        raise ValueError("n_init must be >= 8")
    sizes = [spec.d] + [width] * spec.L + [1]
    pairs = [(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64))
             for a, b in pairs]
    samples = np.empty((n_init, len(pairs)))
    for i in range(n_init):
        weights = [rng.normal(sizes[l + 1], sizes[l])
                   for l in range(spec.L + 1)]
        biases = [rng.normal(width) for _ in range(spec.L)]
        for j, (x, xp) in enumerate(pairs):
            samples[i, j] = _mc_grad_inner(weights, biases, spec.beta,
                                           sizes, x, xp)
    means = samples.mean(axis=0)
    stderrs = samples.std(axis=0, ddof=1) / np.sqrt(n_init)
    return [(float(m), float(s)) for m, s in zip(means, stderrs)]


def mc_ntk_estimate(x, xp, spec: KernelSpec, width: int, n_init: int,
                    rng: RngStream) -> tuple[float, float]:
    """Finite-width Monte-Carlo estimate of the NTK for one input pair."""
    return mc_ntk_estimate_pairs([(x, xp)], spec, width, n_init, rng)[0]
