"""Deterministic random streams and the shared dense linear-algebra helpers.

All randomness in the package flows through :class:`RngStream`, a thin wrapper
around numpy's Philox counter-based generator keyed directly by
``(seed, stream_id)``.  Philox is counter-based, so the same key yields the
same bit stream on every platform, and distinct keys give statistically
independent streams.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


class NonSymmetric(ValueError):
    """Matrix handed to spd_solve is not symmetric within tolerance."""


class SingularSystem(RuntimeError):
    """Jitter escalation hit its cap without a successful factorization."""


def splitmix64(x: int) -> int:
    """One step of the splitmix64 mixer, used only to derive stream ids."""
    x = (x + _GOLDEN) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return (z ^ (z >> 31)) & MASK64


def derive_stream(base: int, *parts: int) -> int:
    """Mix integer tags into a base stream id, giving a new 64-bit id."""
    x = base & MASK64
    for p in parts:
        x = splitmix64(x ^ ((p & MASK64) * _GOLDEN & MASK64))
    return x


@dataclass
class RngStream:
    """A single-owner deterministic stream of random numbers.

    The (seed, stream_id) pair is the full identity of the stream; it is
    recorded in dataset and run provenance so any artifact can be regenerated
    bit-exactly.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        key = np.array([self.seed & MASK64, self.stream_id & MASK64],
                       dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def normal(self, *shape: int) -> np.ndarray:
        """i.i.d. standard normal samples of the given shape (float64)."""
        return self._gen.standard_normal(shape if shape else None)

    def uniform(self, low: float, high: float, shape) -> np.ndarray:
        return self._gen.uniform(low, high, shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def child(self, *parts: int) -> "RngStream":
        """A fresh independent stream derived from this one's identity.

        Does not consume state of the parent; purely a function of
        (seed, stream_id, parts).
        """
        return RngStream(self.seed, derive_stream(self.stream_id, *parts))


def gaussian_vector(rng: RngStream, d: int) -> np.ndarray:
    """d i.i.d. standard-normal samples; advances the stream."""
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    return rng.normal(d)


def spd_solve(A: np.ndarray, b: np.ndarray,
              base_jitter: float | None = None) -> tuple[np.ndarray, float]:
    """Solve (A + jitter*I) x = b for symmetric positive (semi)definite A.

    Jitter starts at ``base_jitter`` (default 1e-10 times the mean diagonal)
    and escalates by factors of 10 until a Cholesky factorization succeeds
    and the relative residual of the jittered system is <= 1e-8, capped at
    1e-4 times the mean diagonal.  The jitter actually used is returned so it
    is reported, never hidden.
    """
    A = np.asarray(A, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n = A.shape[0]
    if A.ndim != 2 or A.shape[1] != n:
        raise ValueError(f"A must be square, got shape {A.shape}")
    if b.shape[0] != n:
        raise ValueError(f"dimension mismatch: A is {n}x{n}, b has {b.shape[0]}")
    scale = np.max(np.abs(A)) if A.size else 0.0
    asym = np.max(np.abs(A - A.T)) if A.size else 0.0
    if asym > 1e-10 * max(scale, 1e-300):
        raise NonSymmetric(f"relative asymmetry {asym / scale:.3e} exceeds 1e-10")

    mean_diag = float(np.trace(A)) / n
    if base_jitter is None:
        base_jitter = 1e-10 * mean_diag
    cap = 1e-4 * mean_diag
    bnorm = float(np.linalg.norm(b))

    jitter = float(base_jitter)
    eye = np.eye(n)
    while True:
        try:
            cf = scipy.linalg.cho_factor(A + jitter * eye, lower=True,
                                         check_finite=False)
            x = scipy.linalg.cho_solve(cf, b, check_finite=False)
            resid = float(np.linalg.norm((A + jitter * eye) @ x - b))
            if np.all(np.isfinite(x)) and resid <= 1e-8 * max(bnorm, 1e-300):
                return x, jitter
        except (scipy.linalg.LinAlgError, np.linalg.LinAlgError):
            pass
        jitter = 10.0 * jitter if jitter > 0 else max(1e-14 * mean_diag, 1e-300)
        if jitter > cap:
            raise SingularSystem(
                f"jitter cap {cap:.3e} reached without a successful solve")


def min_eig_estimate(A: np.ndarray, iters: int = 200,
                     seed: int = 0) -> float:
    """Estimate the minimum eigenvalue of symmetric A by power iteration.

    Runs power iteration on c*I - A with c an upper bound on the spectrum
    (row-sum norm), so it needs no eigensolver.  Used for PSD sanity checks.
    """
    A = np.asarray(A, dtype=np.float64)
    n = A.shape[0]
    c = float(np.max(np.sum(np.abs(A), axis=1)))
    v = RngStream(seed, derive_stream(0, 0xE16)).normal(n)
    v /= np.linalg.norm(v)
    for _ in range(iters):
        w = c * v - A @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            break
        v = w / nw
    return float(v @ (A @ v))
