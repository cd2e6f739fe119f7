"""Binary containers for trained models.

MLP checkpoint layout (little-endian):
    magic b"DLMLP1\\0\\0", then uint32 d, L, h, uint8 init kind
    (0 = glorot, 1 = ntk_param), float64 beta, then the parameter arrays in
    layer-major order (w1, b1, ..., wL, bL, w_out) as row-major float64.

NTK model layout:
    magic b"DLNTK1\\0\\0", then uint32 L, d, N, float64 beta, jitter,
    residual, then X (N x d, row-major) and alpha (N) as float64.
"""

from __future__ import annotations

import struct

import numpy as np

from .network import Architecture, MlpModel
from .ntk import KernelSpec, NtkModel

_MLP_MAGIC = b"DLMLP1\x00\x00"
_NTK_MAGIC = b"DLNTK1\x00\x00"
_INIT_CODES = {"glorot": 0, "ntk_param": 1}
_INIT_NAMES = {v: k for k, v in _INIT_CODES.items()}


def _write_array(f, a: np.ndarray):
    f.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def _read_array(f, shape) -> np.ndarray:
    n = int(np.prod(shape))
    buf = f.read(8 * n)
    if len(buf) != 8 * n:
        raise ValueError("truncated checkpoint")
    return np.frombuffer(buf, dtype="<f8").reshape(shape).copy()


def save_mlp(model: MlpModel, path: str) -> None:
    a = model.arch
    with open(path, "wb") as f:
        f.write(_MLP_MAGIC)
        f.write(struct.pack("<IIIBd", a.d, a.L, a.h, _INIT_CODES[a.init], a.beta))
        for l in range(a.L):
            _write_array(f, model.weights[l])
            _write_array(f, model.biases[l])
        _write_array(f, model.weights[-1])


def load_mlp(path: str) -> MlpModel:
    with open(path, "rb") as f:
        if f.read(8) != _MLP_MAGIC:
            raise ValueError(f"{path}: not an MLP checkpoint")
        d, L, h, code, beta = struct.unpack("<IIIBd", f.read(struct.calcsize("<IIIBd")))
        arch = Architecture(d, L, h, _INIT_NAMES[code], beta)
        sizes = arch.layer_sizes
        weights, biases = [], []
        for l in range(L):
            weights.append(_read_array(f, (sizes[l + 1], sizes[l])))
            biases.append(_read_array(f, (h,)))
        weights.append(_read_array(f, (1, h)))
    return MlpModel(arch, weights, biases)


def save_ntk(model: NtkModel, path: str) -> None:
    n, d = model.X.shape
    with open(path, "wb") as f:
        f.write(_NTK_MAGIC)
        f.write(struct.pack("<IIIddd", model.spec.L, d, n, model.spec.beta,
                            model.jitter_used, model.residual))
        _write_array(f, model.X)
        _write_array(f, model.alpha)


def load_ntk(path: str) -> NtkModel:
    with open(path, "rb") as f:
        if f.read(8) != _NTK_MAGIC:
            raise ValueError(f"{path}: not an NTK model file")
        L, d, n, beta, jitter, residual = struct.unpack(
            "<IIIddd", f.read(struct.calcsize("<IIIddd")))
        X = _read_array(f, (n, d))
        alpha = _read_array(f, (n,))
    return NtkModel(KernelSpec(L, beta, d), X, alpha, jitter, residual)
