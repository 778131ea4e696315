"""Minimal differentiable building blocks for the fixed policy architectures:
dense and 1D-conv layers, ReLU, softmax, set max-pooling, L2 loss, Adam, and
a checksummed float64 checkpoint container.

Everything is float64 and batched over a leading sample dimension. Backward
passes are exact hand-derived gradients; layers cache what they need from the
last forward call.
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np


class ShapeError(ValueError):
    pass


class NumericFault(RuntimeError):
    """NaN or Inf reached a place it must never be (loss or gradients)."""


class CheckpointError(RuntimeError):
    pass


def assert_finite(name: str, arr: np.ndarray):
    if not np.all(np.isfinite(arr)):
        raise NumericFault(f"non-finite values in {name}")


class Param:
    """Named trainable tensor with an accumulated gradient."""

    def __init__(self, name: str, data: np.ndarray):
        self.name = name
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = np.zeros_like(self.data)

    def zero_grad(self):
        self.grad[...] = 0.0


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Dense:
    """y = x @ W + b for x of shape (B, n_in)."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, name: str):
        self.n_in, self.n_out = n_in, n_out
        self.W = Param(f"{name}/W", glorot_uniform(rng, n_in, n_out, (n_in, n_out)))
        self.b = Param(f"{name}/b", np.zeros(n_out))
        self._x = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise ShapeError(f"dense expects (B, {self.n_in}), got {x.shape}")
        self._x = x
        return x @ self.W.data + self.b.data

    def backward(self, gy: np.ndarray) -> np.ndarray:
        self.W.grad += self._x.T @ gy
        self.b.grad += gy.sum(axis=0)
        return gy @ self.W.data.T

    def params(self):
        return [self.W, self.b]


class Linear(Dense):
    """Dense without bias (the attention projections of the fusion step)."""

    def __init__(self, n_in, n_out, rng, name):
        super().__init__(n_in, n_out, rng, name)
        self.b = Param(f"{name}/b_unused", np.zeros(0))

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise ShapeError(f"linear expects (B, {self.n_in}), got {x.shape}")
        self._x = x
        return x @ self.W.data

    def backward(self, gy):
        self.W.grad += self._x.T @ gy
        return gy @ self.W.data.T

    def params(self):
        return [self.W]


class ReLU:
    def forward(self, x: np.ndarray) -> np.ndarray:
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, gy: np.ndarray) -> np.ndarray:
        return np.where(self._mask, gy, 0.0)

    def params(self):
        return []


class Conv1d:
    """Valid cross-correlation with stride over channels-last (B, L, C_in)
    inputs; output is (B, L', C_out) with L' = (L - K) // stride + 1.

    Channels-last makes every im2col row a contiguous K*C_in block, so the
    gather is a straight memcpy and the convolution is a single GEMM.
    """

    def __init__(self, c_in: int, c_out: int, kernel: int, stride: int,
                 rng: np.random.Generator, name: str):
        self.c_in, self.c_out, self.kernel, self.stride = c_in, c_out, kernel, stride
        fan_in, fan_out = c_in * kernel, c_out * kernel
        # stored (K, C_in, C_out): reshapes to the (K*C_in, C_out) GEMM operand
        self.W = Param(f"{name}/W",
                       glorot_uniform(rng, fan_in, fan_out, (kernel, c_in, c_out)))
        self.b = Param(f"{name}/b", np.zeros(c_out))

    def out_len(self, length: int) -> int:
        if length < self.kernel:
            raise ShapeError(f"conv kernel {self.kernel} larger than input {length}")
        return (length - self.kernel) // self.stride + 1

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.ascontiguousarray(x, dtype=np.float64)
        if x.ndim != 3 or x.shape[2] != self.c_in:
            raise ShapeError(f"conv expects (B, L, {self.c_in}), got {x.shape}")
        B, L, C = x.shape
        Lp = self.out_len(L)
        sB, sL, sC = x.strides
        # each gathered row is a contiguous K*C block; materializing is a
        # straight memcpy (reshape alone can return an aliased view at B=1,
        # which sends BLAS down a very slow path)
        cols = np.ascontiguousarray(np.lib.stride_tricks.as_strided(
            x, shape=(B, Lp, self.kernel * C),
            strides=(sB, self.stride * sL, sC))).reshape(B * Lp, self.kernel * C)
        y = cols @ self.W.data.reshape(self.kernel * C, self.c_out) + self.b.data
        self._cols, self._B, self._L, self._Lp = cols, B, L, Lp
        return y.reshape(B, Lp, self.c_out)

    def backward(self, gy: np.ndarray) -> np.ndarray:
        B, Lp = self._B, self._Lp
        gyl = np.ascontiguousarray(gy).reshape(B * Lp, self.c_out)
        self.W.grad += (self._cols.T @ gyl).reshape(self.W.data.shape)
        self.b.grad += gyl.sum(axis=0)
        gx = np.zeros((B, self._L, self.c_in))
        for k in range(self.kernel):
            gx[:, k:k + self.stride * Lp:self.stride, :] += \
                (gyl @ self.W.data[k].T).reshape(B, Lp, self.c_in)
        return gx

    def params(self):
        return [self.W, self.b]


def softmax(x: np.ndarray) -> np.ndarray:
    """Row-wise max-subtracted softmax; rows sum to 1."""
    x = np.asarray(x, dtype=np.float64)
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_backward(y: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Gradient through softmax given its output y and upstream gy."""
    dot = (gy * y).sum(axis=-1, keepdims=True)
    return y * (gy - dot)


def maxpool_rows(rows: np.ndarray, width: int | None = None):
    """Column-wise max over a (P, D) set of rows.

    P = 0 returns the all-zeros vector (the empty-set convention). Returns
    (pooled (D,), argmax (D,)) with first-row tie-breaking for the gradient.
    """
    rows = np.asarray(rows, dtype=np.float64)
    if rows.size == 0:
        if width is None:
            width = rows.shape[1] if rows.ndim == 2 else 0
        return np.zeros(width), np.zeros(width, dtype=np.int64)
    return rows.max(axis=0), rows.argmax(axis=0)


def maxpool_rows_backward(g: np.ndarray, argmax: np.ndarray, n_rows: int) -> np.ndarray:
    grad = np.zeros((n_rows, len(g)))
    if n_rows:
        grad[argmax, np.arange(len(g))] = g
    return grad


def l2_loss(pred: np.ndarray, target: np.ndarray):
    """Mean squared error over all elements; returns (loss, dloss/dpred)."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"l2_loss shapes differ: {pred.shape} vs {target.shape}")
    diff = pred - target
    loss = float(np.mean(diff * diff))
    return loss, 2.0 * diff / diff.size


class Adam:
    """Standard bias-corrected Adam over a list of Params.

    The step count is shared by the optimizer instance; NaN/Inf gradients
    abort with a NumericFault naming the parameter.
    """

    def __init__(self, params, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise ValueError("duplicate parameter names")
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self):
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if not np.all(np.isfinite(p.grad)):
                raise NumericFault(f"non-finite gradient for {p.name}")
            m *= self.beta1
            m += (1.0 - self.beta1) * p.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * (p.grad * p.grad)
            p.data -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()


# --- checkpoints ------------------------------------------------------------

_MAGIC = b"SNCKPT01"


def save_checkpoint(path, params: dict, meta: dict | None = None):
    """Write named float64 tensors as a little-endian container with a
    payload checksum. Round-trips bit-exactly."""
    names = list(params.keys())
    payload = b"".join(np.ascontiguousarray(params[n], dtype="<f8").tobytes()
                       for n in names)
    entries = {}
    offset = 0
    for n in names:
        arr = np.asarray(params[n])
        nbytes = arr.size * 8
        entries[n] = {"shape": list(arr.shape), "offset": offset, "nbytes": nbytes}
        offset += nbytes
    header = {
        "version": 1,
        "dtype": "<f8",
        "params": entries,
        "meta": meta or {},
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
    }
    hdr = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", len(hdr)))
        f.write(hdr)
        f.write(payload)


def load_checkpoint(path):
    """Read a checkpoint; returns (params dict, meta dict)."""
    try:
        blob = Path(path).read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}")
    if blob[:8] != _MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    (hdr_len,) = struct.unpack("<I", blob[8:12])
    try:
        header = json.loads(blob[12:12 + hdr_len])
    except json.JSONDecodeError as e:
        raise CheckpointError(f"{path}: corrupt header: {e}")
    if header.get("version") != 1:
        raise CheckpointError(f"{path}: unsupported version {header.get('version')}")
    payload = blob[12 + hdr_len:]
    if hashlib.sha256(payload).hexdigest() != header["payload_sha256"]:
        raise CheckpointError(f"{path}: payload checksum mismatch")
    params = {}
    for name, ent in header["params"].items():
        raw = payload[ent["offset"]:ent["offset"] + ent["nbytes"]]
        params[name] = np.frombuffer(raw, dtype="<f8").reshape(ent["shape"]).copy()
    return params, header["meta"]


def state_dict(params) -> dict:
    return {p.name: p.data.copy() for p in params}


def load_state(params, state: dict, prefix_map=None):
    """Copy tensors from `state` into Params by name; shapes must match.

    prefix_map optionally rewrites checkpoint names, e.g. loading the
    stage-1 lidar encoder into the local planner.
    """
    for p in params:
        key = p.name
        if prefix_map:
            for old, new in prefix_map.items():
                if key.startswith(new):
                    key = old + key[len(new):]
                    break
        if key not in state:
            raise CheckpointError(f"checkpoint missing parameter {key}")
        src = state[key]
        if tuple(src.shape) != tuple(p.data.shape):
            raise CheckpointError(
                f"shape mismatch for {key}: checkpoint {tuple(src.shape)} "
                f"vs model {tuple(p.data.shape)}")
        p.data[...] = src
