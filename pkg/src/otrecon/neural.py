"""Minimal reverse-mode tensor engine for small 3D convolutional networks.

Tensors wrap float32 numpy arrays (a float64 mode exists for numerical
studies, see ``default_dtype``).  Each operation records its parents and a
backward closure; ``backward`` on a scalar loss walks the tape in reverse
topological order and accumulates gradients into ``.grad`` buffers.  Repeated
backward calls without ``zero_grads`` keep accumulating.

Reductions (sum / mean / normalization statistics) accumulate in float64 and
cast back; convolutions contract through BLAS in the tensor dtype.  All
randomness flows through explicit seeds, so identical seeds and inputs give
bit-identical results run to run.
"""

from __future__ import annotations

import contextlib
import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import CheckpointError, ContractError, InvalidDimensionError

__all__ = [
    "Tensor",
    "default_dtype",
    "backward",
    "add", "sub", "mul", "neg", "scale", "matmul", "linear",
    "conv3d", "transposed_conv3d", "leaky_relu", "sigmoid",
    "instance_norm3d", "trilinear_upsample3d", "channel_concat",
    "reshape", "flatten", "mean", "tensor_sum",
    "ParamStore", "frozen",
    "AdamWConfig", "OptimizerState", "adamw_step", "kaiming_init",
    "save_checkpoint", "load_checkpoint",
]

_DEFAULT_DTYPE = np.float32


@contextlib.contextmanager
def default_dtype(dtype):
    """Temporarily change the dtype new tensors are created with."""
    global _DEFAULT_DTYPE
    previous = _DEFAULT_DTYPE
    _DEFAULT_DTYPE = np.dtype(dtype).type
    try:
        yield
    finally:
        _DEFAULT_DTYPE = previous


class Tensor:
    """An n-d array node on the autodiff tape."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = np.asarray(data, dtype=dtype or _DEFAULT_DTYPE)
        self.requires_grad = requires_grad
        self.grad = None
        self._parents: tuple = ()
        self._backward_fn = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() on tensor of size {self.data.size}")
        return float(self.data.reshape(()))

    def zero_grad(self):
        self.grad = None

    def backward(self):
        backward(self)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype.name}, requires_grad={self.requires_grad})"

    # light operator sugar; the named functions carry the real API
    def __add__(self, other):
        return add(self, _as_tensor(other, self.dtype))

    def __sub__(self, other):
        return sub(self, _as_tensor(other, self.dtype))

    def __mul__(self, other):
        return mul(self, _as_tensor(other, self.dtype))

    def __neg__(self):
        return neg(self)


def _as_tensor(x, dtype) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _make(data, parents, backward_fn) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward_fn = backward_fn
    else:
        out._parents = ()
        out._backward_fn = None
    return out


def _accum(parent: Tensor, g: np.ndarray):
    if not parent.requires_grad and parent._backward_fn is None:
        return
    if parent.grad is None:
        parent.grad = g.astype(parent.data.dtype, copy=True)
    else:
        parent.grad = parent.grad + g.astype(parent.data.dtype, copy=False)


def backward(loss: Tensor):
    """Reverse-mode accumulation from a scalar loss over the recorded tape."""
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward_fn is not None and node.grad is not None:
            node._backward_fn(node.grad)


def _sum_to_shape(g: np.ndarray, shape) -> np.ndarray:
    """Undo numpy broadcasting: reduce g down to the given shape."""
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# --- elementwise -------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    data = a.data + b.data

    def bw(g):
        _accum(a, _sum_to_shape(g, a.data.shape))
        _accum(b, _sum_to_shape(g, b.data.shape))

    return _make(data, (a, b), bw)


def sub(a: Tensor, b: Tensor) -> Tensor:
    data = a.data - b.data

    def bw(g):
        _accum(a, _sum_to_shape(g, a.data.shape))
        _accum(b, -_sum_to_shape(g, b.data.shape))

    return _make(data, (a, b), bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    data = a.data * b.data

    def bw(g):
        _accum(a, _sum_to_shape(g * b.data, a.data.shape))
        _accum(b, _sum_to_shape(g * a.data, b.data.shape))

    return _make(data, (a, b), bw)


def neg(a: Tensor) -> Tensor:
    def bw(g):
        _accum(a, -g)

    return _make(-a.data, (a,), bw)


def scale(a: Tensor, s: float) -> Tensor:
    s = a.data.dtype.type(s)

    def bw(g):
        _accum(a, g * s)

    return _make(a.data * s, (a,), bw)


def leaky_relu(a: Tensor, slope: float = 0.1) -> Tensor:
    mask = a.data >= 0
    data = np.where(mask, a.data, a.data * a.data.dtype.type(slope))

    def bw(g):
        _accum(a, np.where(mask, g, g * a.data.dtype.type(slope)))

    return _make(data, (a,), bw)


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    data = np.empty_like(x)
    pos = x >= 0
    data[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    data[~pos] = ex / (1.0 + ex)

    def bw(g):
        _accum(a, g * data * (1.0 - data))

    return _make(data, (a,), bw)


# --- shape ops ---------------------------------------------------------------

def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)

    def bw(g):
        _accum(a, g.reshape(a.data.shape))

    return _make(a.data.reshape(shape), (a,), bw)


def flatten(a: Tensor, start_axis: int = 1) -> Tensor:
    lead = a.data.shape[:start_axis]
    return reshape(a, lead + (-1,))


def channel_concat(tensors: list[Tensor]) -> Tensor:
    """Concatenate along axis 1; the autodiff-aware counterpart of volume stacking."""
    if not tensors:
        raise ContractError("channel_concat of an empty list")
    data = np.concatenate([t.data for t in tensors], axis=1)
    sizes = [t.data.shape[1] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def bw(g):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            _accum(t, g[:, lo:hi])

    return _make(data, tuple(tensors), bw)


# --- reductions ---------------------------------------------------------------

def tensor_sum(a: Tensor, axes=None, keepdims: bool = False) -> Tensor:
    data = a.data.sum(axis=axes, keepdims=keepdims, dtype=np.float64).astype(a.data.dtype)

    def bw(g):
        if axes is None:
            _accum(a, np.broadcast_to(g.reshape((1,) * a.data.ndim), a.data.shape))
        else:
            gg = g if keepdims else np.expand_dims(g, axes)
            _accum(a, np.broadcast_to(gg, a.data.shape))

    return _make(data, (a,), bw)


def mean(a: Tensor, axes=None, keepdims: bool = False) -> Tensor:
    if axes is None:
        count = a.data.size
    else:
        ax = (axes,) if isinstance(axes, int) else tuple(axes)
        count = int(np.prod([a.data.shape[i] for i in ax]))
    data = a.data.mean(axis=axes, keepdims=keepdims, dtype=np.float64).astype(a.data.dtype)

    def bw(g):
        inv = a.data.dtype.type(1.0 / count)
        if axes is None:
            _accum(a, np.broadcast_to((g * inv).reshape((1,) * a.data.ndim), a.data.shape))
        else:
            gg = g if keepdims else np.expand_dims(g, axes)
            _accum(a, np.broadcast_to(gg * inv, a.data.shape))

    return _make(data, (a,), bw)


# --- linear algebra ------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise InvalidDimensionError("matmul expects 2-d operands")
    data = a.data @ b.data

    def bw(g):
        _accum(a, g @ b.data.T)
        _accum(b, a.data.T @ g)

    return _make(data, (a, b), bw)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """x (N, F) times weight (O, F) transposed, plus bias (O,)."""
    out = matmul(x, transpose2d(weight))
    if bias is not None:
        out = add(out, bias)
    return out


def transpose2d(a: Tensor) -> Tensor:
    def bw(g):
        _accum(a, g.T)

    return _make(a.data.T, (a,), bw)


# --- convolution machinery ------------------------------------------------------

def _triple(v) -> tuple[int, int, int]:
    if isinstance(v, int):
        return (v, v, v)
    t = tuple(int(x) for x in v)
    if len(t) != 3:
        raise InvalidDimensionError(f"expected int or 3-tuple, got {v!r}")
    return t


def _conv_out_size(size, k, s, p) -> int:
    out = (size + 2 * p - k) // s + 1
    if out < 1:
        raise InvalidDimensionError(f"kernel {k} too large for size {size} with padding {p}")
    return out


def _windows(xp: np.ndarray, kern: tuple, stride: tuple) -> np.ndarray:
    win = sliding_window_view(xp, kern, axis=(2, 3, 4))
    return win[:, :, :: stride[0], :: stride[1], :: stride[2]]


def _conv_fwd(x: np.ndarray, w: np.ndarray, stride, padding) -> np.ndarray:
    s, p = stride, padding
    xp = np.pad(x, ((0, 0), (0, 0), (p[0], p[0]), (p[1], p[1]), (p[2], p[2])))
    win = _windows(xp, w.shape[2:], s)
    out = np.tensordot(win, w, axes=([1, 5, 6, 7], [1, 2, 3, 4]))
    return np.ascontiguousarray(out.transpose(0, 4, 1, 2, 3))


def _conv_grad_w(x: np.ndarray, gout: np.ndarray, kern, stride, padding) -> np.ndarray:
    s, p = stride, padding
    xp = np.pad(x, ((0, 0), (0, 0), (p[0], p[0]), (p[1], p[1]), (p[2], p[2])))
    win = _windows(xp, kern, s)
    return np.tensordot(gout, win, axes=([0, 2, 3, 4], [0, 2, 3, 4]))


def _conv_grad_x(w: np.ndarray, gout: np.ndarray, stride, padding, in_spatial) -> np.ndarray:
    """Gradient w.r.t. the conv input: dilate by stride, full-correlate flipped kernel."""
    s, p = stride, padding
    kern = w.shape[2:]
    n, co = gout.shape[:2]
    dil_size = [(gout.shape[2 + i] - 1) * s[i] + 1 for i in range(3)]
    dil = np.zeros((n, co, *dil_size), dtype=gout.dtype)
    dil[:, :, :: s[0], :: s[1], :: s[2]] = gout
    pad_spec = [(0, 0), (0, 0)]
    for i in range(3):
        lead = kern[i] - 1 - p[i]
        if lead < 0:
            raise InvalidDimensionError("padding larger than kernel-1 is unsupported")
        tail = in_spatial[i] + p[i] - kern[i] + 1 - dil_size[i] + kern[i] - 1
        pad_spec.append((lead, tail))
    dil = np.pad(dil, pad_spec)
    w_flip = w[:, :, ::-1, ::-1, ::-1].transpose(1, 0, 2, 3, 4)
    return _conv_fwd(dil, np.ascontiguousarray(w_flip), (1, 1, 1), (0, 0, 0))


def conv3d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride=1, padding=0) -> Tensor:
    """Cross-correlation of x (N,C,H,W,D) with weight (O,C,kh,kw,kd)."""
    s, p = _triple(stride), _triple(padding)
    if x.data.ndim != 5 or weight.data.ndim != 5:
        raise InvalidDimensionError("conv3d expects 5-d input and kernel")
    if x.data.shape[1] != weight.data.shape[1]:
        raise InvalidDimensionError(
            f"input channels {x.data.shape[1]} != kernel channels {weight.data.shape[1]}"
        )
    for i in range(3):
        _conv_out_size(x.data.shape[2 + i], weight.data.shape[2 + i], s[i], p[i])
    data = _conv_fwd(x.data, weight.data, s, p)

    def bw(g):
        g = np.ascontiguousarray(g)
        if weight.requires_grad or weight._backward_fn is not None:
            _accum(weight, _conv_grad_w(x.data, g, weight.data.shape[2:], s, p))
        if x.requires_grad or x._backward_fn is not None:
            _accum(x, _conv_grad_x(weight.data, g, s, p, x.data.shape[2:]))

    out = _make(data, (x, weight), bw)
    if bias is not None:
        out = add(out, reshape(bias, (1, -1, 1, 1, 1)))
    return out


def transposed_conv3d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride=2, padding=0) -> Tensor:
    """Adjoint of conv3d; weight laid out (C_in, C_out, kh, kw, kd).

    Output spatial size is (in - 1) * stride - 2 * padding + kernel.
    """
    s, p = _triple(stride), _triple(padding)
    if x.data.ndim != 5 or weight.data.ndim != 5:
        raise InvalidDimensionError("transposed_conv3d expects 5-d input and kernel")
    if x.data.shape[1] != weight.data.shape[0]:
        raise InvalidDimensionError(
            f"input channels {x.data.shape[1]} != kernel in-channels {weight.data.shape[0]}"
        )
    out_spatial = tuple(
        (x.data.shape[2 + i] - 1) * s[i] - 2 * p[i] + weight.data.shape[2 + i]
        for i in range(3)
    )
    if any(o < 1 for o in out_spatial):
        raise InvalidDimensionError(f"degenerate output size {out_spatial}")
    data = _conv_grad_x(weight.data, x.data, s, p, out_spatial)

    def bw(g):
        g = np.ascontiguousarray(g)
        if weight.requires_grad or weight._backward_fn is not None:
            _accum(weight, _conv_grad_w(g, x.data, weight.data.shape[2:], s, p))
        if x.requires_grad or x._backward_fn is not None:
            _accum(x, _conv_fwd(g, weight.data, s, p))

    out = _make(data, (x, weight), bw)
    if bias is not None:
        out = add(out, reshape(bias, (1, -1, 1, 1, 1)))
    return out


# --- normalization and resampling ------------------------------------------------

def instance_norm3d(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-sample, per-channel normalization over the spatial axes, with affine."""
    if x.data.ndim != 5:
        raise InvalidDimensionError("instance_norm3d expects (N,C,H,W,D)")
    dt = x.data.dtype
    axes = (2, 3, 4)
    m = float(np.prod(x.data.shape[2:]))
    mu = x.data.mean(axis=axes, keepdims=True, dtype=np.float64)
    var = (x.data.astype(np.float64) ** 2).mean(axis=axes, keepdims=True) - mu**2
    istd = (1.0 / np.sqrt(var + eps)).astype(dt)
    xc = x.data - mu.astype(dt)
    xhat = xc * istd
    gview = gamma.data.reshape(1, -1, 1, 1, 1)
    data = xhat * gview + beta.data.reshape(1, -1, 1, 1, 1)

    def bw(g):
        _accum(gamma, (g * xhat).sum(axis=(0, 2, 3, 4), dtype=np.float64).astype(dt))
        _accum(beta, g.sum(axis=(0, 2, 3, 4), dtype=np.float64).astype(dt))
        gxhat = g * gview
        s1 = gxhat.sum(axis=axes, keepdims=True, dtype=np.float64).astype(dt)
        s2 = (gxhat * xhat).sum(axis=axes, keepdims=True, dtype=np.float64).astype(dt)
        gx = istd * (gxhat - (s1 + xhat * s2) * dt.type(1.0 / m))
        _accum(x, gx)

    return _make(data, (x, gamma, beta), bw)


def _interp_matrix(n_in: int, factor: int, dtype) -> np.ndarray:
    """Linear interpolation weights from n_in samples to n_in*factor samples."""
    n_out = n_in * factor
    mat = np.zeros((n_out, n_in), dtype=dtype)
    for o in range(n_out):
        src = (o + 0.5) / factor - 0.5
        if src <= 0:
            mat[o, 0] = 1.0
        elif src >= n_in - 1:
            mat[o, n_in - 1] = 1.0
        else:
            i0 = int(np.floor(src))
            t = src - i0
            mat[o, i0] = 1.0 - t
            mat[o, i0 + 1] = t
    return mat


def _apply_axis_matrix(x: np.ndarray, mat: np.ndarray, axis: int) -> np.ndarray:
    moved = np.moveaxis(x, axis, -1)
    out = moved @ mat.T
    return np.ascontiguousarray(np.moveaxis(out, -1, axis))


def trilinear_upsample3d(x: Tensor, factor: int = 2) -> Tensor:
    """Separable linear upsampling of the three spatial axes by an integer factor."""
    if x.data.ndim != 5:
        raise InvalidDimensionError("trilinear_upsample3d expects (N,C,H,W,D)")
    if factor < 1:
        raise InvalidDimensionError(f"factor must be >= 1, got {factor}")
    dt = x.data.dtype
    mats = [_interp_matrix(x.data.shape[2 + i], factor, dt) for i in range(3)]
    data = x.data
    for i, m in enumerate(mats):
        data = _apply_axis_matrix(data, m, 2 + i)

    def bw(g):
        gx = g
        for i, m in enumerate(mats):
            gx = _apply_axis_matrix(gx, m.T, 2 + i)
        _accum(x, gx)

    return _make(data, (x,), bw)


# --- parameters, init, optimizer ---------------------------------------------------

class ParamStore:
    """Named trainable tensors; names are unique and insertion-ordered."""

    def __init__(self, rng_seed: int = 0):
        self.params: dict[str, Tensor] = {}
        self.rng_seed = rng_seed

    def add(self, name: str, tensor: Tensor) -> Tensor:
        if name in self.params:
            raise ContractError(f"duplicate parameter name {name!r}")
        tensor.requires_grad = True
        self.params[name] = tensor
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def __len__(self) -> int:
        return len(self.params)

    def names(self) -> list[str]:
        return list(self.params)

    def tensors(self) -> list[Tensor]:
        return list(self.params.values())

    def zero_grads(self):
        for t in self.params.values():
            t.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        for k, t in self.params.items():
            if k not in state:
                raise CheckpointError(f"missing parameter {k!r}")
            arr = np.asarray(state[k], dtype=t.data.dtype)
            if arr.shape != t.data.shape:
                raise CheckpointError(f"shape mismatch for {k!r}: {arr.shape} vs {t.data.shape}")
            t.data = arr.copy()


@contextlib.contextmanager
def frozen(*stores: ParamStore):
    """Disable gradient accumulation into the given stores for the duration."""
    tensors = [t for s in stores for t in s.tensors()]
    for t in tensors:
        t.requires_grad = False
    try:
        yield
    finally:
        for t in tensors:
            t.requires_grad = True


def kaiming_init(shape, seed: int, fan_in: int | None = None, dtype=None) -> Tensor:
    """Normal(0, sqrt(2 / fan_in)) init; fan_in defaults to prod(shape[1:])."""
    shape = tuple(shape)
    if fan_in is None:
        if len(shape) < 2:
            raise ContractError("fan_in not derivable from a 1-d shape; pass it explicitly")
        fan_in = int(np.prod(shape[1:]))
    rng = np.random.Generator(np.random.PCG64(seed))
    std = np.sqrt(2.0 / fan_in)
    data = (rng.standard_normal(shape) * std).astype(dtype or _DEFAULT_DTYPE)
    return Tensor(data, requires_grad=True)


@dataclass(frozen=True)
class AdamWConfig:
    lr: float = 1e-5
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-3
    weight_decay: float = 0.01


@dataclass
class OptimizerState:
    """AdamW moments and step counter for one ParamStore."""

    config: AdamWConfig
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    @classmethod
    def for_store(cls, store: ParamStore, config: AdamWConfig) -> "OptimizerState":
        state = cls(config=config)
        for name, t in store.params.items():
            state.m[name] = np.zeros_like(t.data)
            state.v[name] = np.zeros_like(t.data)
        return state


def adamw_step(store: ParamStore, state: OptimizerState):
    """One decoupled-weight-decay Adam update; requires populated grads."""
    cfg = state.config
    state.step += 1
    t = state.step
    bc1 = 1.0 - cfg.beta1**t
    bc2 = 1.0 - cfg.beta2**t
    for name, p in store.params.items():
        if p.grad is None:
            raise ContractError(f"parameter {name!r} has no gradient")
        g = p.grad
        m = state.m[name]
        v = state.v[name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        p.data = p.data - cfg.lr * (m_hat / (np.sqrt(v_hat) + cfg.eps) + cfg.weight_decay * p.data)


# --- checkpoints ------------------------------------------------------------------

_CKPT_MAGIC = b"OTRCKPT1"


def save_checkpoint(path: str, stores: dict[str, ParamStore], step: int, rng_state=None):
    """One file: magic, u64 header length, JSON header, raw <f4 blobs in order."""
    entries = []
    blobs = []
    for prefix, store in stores.items():
        for name, t in store.params.items():
            full = f"{prefix}.{name}"
            entries.append({"name": full, "shape": list(t.data.shape)})
            blobs.append(t.data.astype("<f4", copy=False).tobytes())
    header = json.dumps(
        {"version": 1, "step": step, "rng_state": rng_state, "params": entries}
    ).encode("utf-8")
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)
    os.replace(tmp, path)


def load_checkpoint(path: str):
    """Returns (params: dict name -> float32 array, meta: dict with step/rng_state)."""
    try:
        with open(path, "rb") as fh:
            magic = fh.read(len(_CKPT_MAGIC))
            if magic != _CKPT_MAGIC:
                raise CheckpointError(f"{path}: bad magic {magic!r}")
            (hlen,) = struct.unpack("<Q", fh.read(8))
            header = json.loads(fh.read(hlen).decode("utf-8"))
            params = {}
            for entry in header["params"]:
                shape = tuple(entry["shape"])
                count = int(np.prod(shape)) if shape else 1
                raw = fh.read(count * 4)
                if len(raw) != count * 4:
                    raise CheckpointError(f"{path}: truncated blob for {entry['name']!r}")
                params[entry["name"]] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
    except OSError as exc:
        raise CheckpointError(f"{path}: {exc}") from exc
    meta = {"step": header["step"], "rng_state": header.get("rng_state")}
    return params, meta
