"""Feed-forward ReLU Q-network in numpy, with Adam and a binary checkpoint format.

All weights and biases live in one flat vector; per-layer arrays are views
into it, so the optimizer and the target-network copy work on a single array.

Checkpoint layout (little-endian):

    magic      4 bytes  b"IMQN"
    version    uint32   1
    itemsize   uint32   4 (float32) or 8 (float64)
    n_layers   uint32
    sizes      uint32 x (n_layers + 1)
    then per layer: W as (in, out) row-major, then b (out,)
"""
from __future__ import annotations

import struct
from pathlib import Path
from typing import Sequence

import numpy as np

from intentmerge import _kernels_py, kernels

MAGIC = b"IMQN"
VERSION = 1
_DTYPES = {4: np.float32, 8: np.float64}


class CheckpointError(ValueError):
    pass


class QNetwork:
    def __init__(self, sizes: Sequence[int] = (29, 512, 512, 5), dtype=np.float32):
        self.sizes = tuple(int(s) for s in sizes)
        if len(self.sizes) < 2 or any(s < 1 for s in self.sizes):
            raise ValueError(f"bad layer sizes {sizes}")
        self.dtype = np.dtype(dtype)
        n = sum(i * o + o for i, o in zip(self.sizes[:-1], self.sizes[1:]))
        self.params = np.zeros(n, dtype=self.dtype)
        self._bind()

    def _bind(self) -> None:
        self.weights, self.biases = [], []
        k = 0
        for i, o in zip(self.sizes[:-1], self.sizes[1:]):
            self.weights.append(self.params[k:k + i * o].reshape(i, o))
            k += i * o
            self.biases.append(self.params[k:k + o])
            k += o

    @property
    def n_inputs(self) -> int:
        return self.sizes[0]

    @property
    def n_outputs(self) -> int:
        return self.sizes[-1]

    def init(self, rng: np.random.Generator) -> "QNetwork":
        """He-uniform weights, zero biases."""
        for W in self.weights:
            limit = np.sqrt(6.0 / W.shape[0])
            W[...] = rng.uniform(-limit, limit, size=W.shape)
        for b in self.biases:
            b[...] = 0
        return self

    def copy(self) -> "QNetwork":
        net = QNetwork(self.sizes, self.dtype)
        net.params[...] = self.params
        return net

    def load_params(self, other: "QNetwork") -> None:
        if other.sizes != self.sizes:
            raise ValueError("layer sizes differ")
        self.params[...] = other.params

    # -- evaluation -------------------------------------------------------
    def _check(self, obs) -> tuple[np.ndarray, bool]:
        x = np.asarray(obs, dtype=self.dtype)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.n_inputs:
            raise ValueError(f"expected observations of length {self.n_inputs}, got shape {np.shape(obs)}")
        return x, single

    def forward(self, obs) -> np.ndarray:
        x, single = self._check(obs)
        last = len(self.weights) - 1
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            x = x @ W + b
            if k < last:
                np.maximum(x, 0, out=x)
        return x[0] if single else x

    __call__ = forward

    def forward_cached(self, obs) -> tuple[np.ndarray, list[np.ndarray]]:
        x, _ = self._check(obs)
        acts = [x]
        last = len(self.weights) - 1
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            x = x @ W + b
            if k < last:
                np.maximum(x, 0, out=x)
            acts.append(x)
        return x, acts

    def backward(self, acts: list[np.ndarray], dout: np.ndarray) -> np.ndarray:
        """Gradient of sum(dout * output) w.r.t. the flat parameter vector."""
        grad = np.empty_like(self.params)
        gw, gb = [], []
        k = 0
        for i, o in zip(self.sizes[:-1], self.sizes[1:]):
            gw.append(grad[k:k + i * o].reshape(i, o))
            k += i * o
            gb.append(grad[k:k + o])
            k += o
        d = np.asarray(dout, dtype=self.dtype)
        for layer in range(len(self.weights) - 1, -1, -1):
            np.matmul(acts[layer].T, d, out=gw[layer])
            gb[layer][...] = d.sum(axis=0)
            if layer > 0:
                d = d @ self.weights[layer].T
                d *= acts[layer] > 0
        return grad

    # -- persistence ------------------------------------------------------
    def to_bytes(self) -> bytes:
        header = MAGIC + struct.pack("<III", VERSION, self.dtype.itemsize, len(self.sizes) - 1)
        header += struct.pack(f"<{len(self.sizes)}I", *self.sizes)
        return header + self.params.astype(self.dtype.newbyteorder("<"), copy=False).tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "QNetwork":
        if data[:4] != MAGIC:
            raise CheckpointError("not a Q-network checkpoint")
        if len(data) < 16:
            raise CheckpointError("truncated header")
        version, itemsize, n_layers = struct.unpack_from("<III", data, 4)
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        if itemsize not in _DTYPES:
            raise CheckpointError(f"unsupported parameter width {itemsize}")
        off = 16 + 4 * (n_layers + 1)
        if len(data) < off:
            raise CheckpointError("truncated header")
        sizes = struct.unpack_from(f"<{n_layers + 1}I", data, 16)
        net = cls(sizes, _DTYPES[itemsize])
        body = np.frombuffer(data, dtype=np.dtype(_DTYPES[itemsize]).newbyteorder("<"), offset=off)
        if body.size != net.params.size:
            raise CheckpointError(f"expected {net.params.size} parameters, found {body.size}")
        net.params[...] = body
        return net

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path: str | Path) -> "QNetwork":
        return cls.from_bytes(Path(path).read_bytes())


class Adam:
    FLUSH_EVERY = 16
    TINY = 1e-30

    def __init__(self, n: int, lr: float = 5e-4, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8, dtype=np.float32):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(n, dtype=dtype)
        self.v = np.zeros(n, dtype=dtype)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> None:
        self.t += 1
        # moments of dead units decay into subnormals, which are very slow to compute with
        tiny = self.TINY if self.t % self.FLUSH_EVERY == 0 else 0.0
        update = kernels.adam_update if params.dtype == np.float32 else _kernels_py.adam_update
        update(params, grad, self.m, self.v, self.beta1, self.beta2, self.eps, self.lr,
               self.t, tiny)


def huber(diff: np.ndarray, delta: float = 1.0) -> tuple[float, np.ndarray]:
    """Mean Huber loss and its gradient w.r.t. ``diff``."""
    a = np.abs(diff)
    quad = np.minimum(a, delta)
    loss = float(np.mean(0.5 * quad * quad + delta * (a - quad)))
    return loss, np.clip(diff, -delta, delta) / diff.size
