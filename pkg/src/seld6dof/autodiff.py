"""Dense float64 tensors with reverse-mode automatic differentiation.

Small by design: exactly the operation set the localization network needs,
all values are 64-bit, execution is single-threaded and deterministic. The
backward pass visits each graph node once in reverse topological order;
repeated backward() calls without zeroing accumulate into .grad.

Also home to the Adam optimizer and the binary parameter checkpoint format
(magic "S6DF").
"""

from __future__ import annotations

import struct

import numpy as np

from . import kernels
from .errors import ContractError, DimensionError


class Tensor:
    """n-d float64 value node. Gradients populate .grad after backward()."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad=False, parents=(), backward_fn=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = tuple(parents)
        self._backward_fn = backward_fn

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- graph-building arithmetic ------------------------------------------

    def __add__(self, other):
        return add(self, _as_tensor(other))

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    __rmul__ = __mul__

    def __sub__(self, other):
        return add(self, scale(_as_tensor(other), -1.0))

    def __rsub__(self, other):
        return add(_as_tensor(other), scale(self, -1.0))

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, _as_tensor(other))

    def __getitem__(self, key):
        return tslice(self, key)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def zero_grad(self):
        self.grad = None

    def backward(self):
        backward(self)


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g, shape):
    """Sum gradient g down to `shape` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _node(data, parents, backward_fn):
    req = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=req,
                  parents=parents if req else (),
                  backward_fn=backward_fn if req else None)


def _check_broadcast(a, b, op):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast")


# -- elementwise ops ---------------------------------------------------------

def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a.data, b.data, "add")

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _node(a.data + b.data, (a, b), bwd)


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a.data, b.data, "mul")

    def bwd(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _node(a.data * b.data, (a, b), bwd)


def scale(a, s):
    a = _as_tensor(a)
    s = float(s)
    return _node(a.data * s, (a,), lambda g: (g * s,))


def tanh(a):
    a = _as_tensor(a)
    y = np.tanh(a.data)
    return _node(y, (a,), lambda g: (g * (1.0 - y * y),))


def sigmoid(a):
    a = _as_tensor(a)
    x = a.data
    y = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                 np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

    def bwd(g):
        return (g * y * (1.0 - y),)

    return _node(y, (a,), bwd)


def relu(a):
    a = _as_tensor(a)
    mask = a.data > 0
    return _node(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


# -- linear algebra / shape ops ----------------------------------------------

def matmul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise DimensionError(f"matmul expects 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: inner dimensions disagree, {a.shape} x {b.shape}")

    def bwd(g):
        return g @ b.data.T, a.data.T @ g

    return _node(a.data @ b.data, (a, b), bwd)


def reshape(a, shape):
    a = _as_tensor(a)
    old = a.shape
    return _node(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def transpose(a, axes):
    a = _as_tensor(a)
    inv = tuple(np.argsort(axes))
    return _node(np.ascontiguousarray(a.data.transpose(axes)), (a,),
                 lambda g: (g.transpose(inv),))


def tslice(a, key):
    a = _as_tensor(a)

    def bwd(g):
        out = np.zeros_like(a.data)
        out[key] = g
        return (out,)

    return _node(a.data[key], (a,), bwd)


def concat(tensors, axis=0):
    tensors = [_as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.ascontiguousarray(piece)
                     for piece in np.split(g, splits, axis=axis))

    return _node(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), bwd)


def tsum(a, axis=None, keepdims=False):
    a = _as_tensor(a)
    shape = a.shape

    def bwd(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _node(a.data.sum(axis=axis, keepdims=keepdims), (a,), bwd)


def tmean(a, axis=None, keepdims=False):
    a = _as_tensor(a)
    n = a.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return scale(tsum(a, axis=axis, keepdims=keepdims), 1.0 / float(n))


# -- network-specific fused ops ----------------------------------------------

def conv2d(x, w, b, pad_t, pad_f):
    """Time-causal 2-d convolution; see seld6dof.kernels for the layout."""
    x, w, b = _as_tensor(x), _as_tensor(w), _as_tensor(b)
    if x.data.ndim != 3 or w.data.ndim != 4 or x.shape[1] != w.shape[1]:
        raise DimensionError(f"conv2d: input {x.shape} vs kernel {w.shape}")
    if w.shape[2] > x.shape[0] + pad_t or w.shape[3] > x.shape[2] + 2 * pad_f:
        raise DimensionError(f"conv2d: kernel {w.shape} larger than padded input {x.shape}")
    xd = np.ascontiguousarray(x.data)
    wd = np.ascontiguousarray(w.data)
    y = kernels.conv2d_forward(xd, wd, np.ascontiguousarray(b.data), pad_t, pad_f)

    def bwd(g):
        dx, dw, db = kernels.conv2d_backward(xd, wd, np.ascontiguousarray(g),
                                             pad_t, pad_f, need_dx=x.requires_grad)
        return dx, dw, db

    return _node(y, (x, w, b), bwd)


def conv1d(x, w, b, pad_left):
    x, w, b = _as_tensor(x), _as_tensor(w), _as_tensor(b)
    if x.data.ndim != 2 or w.data.ndim != 3 or x.shape[1] != w.shape[1]:
        raise DimensionError(f"conv1d: input {x.shape} vs kernel {w.shape}")
    if w.shape[2] > x.shape[0] + pad_left:
        raise DimensionError(f"conv1d: kernel {w.shape} larger than padded input {x.shape}")
    xd = np.ascontiguousarray(x.data)
    wd = np.ascontiguousarray(w.data)
    y = kernels.conv1d_forward(xd, wd, np.ascontiguousarray(b.data), pad_left)

    def bwd(g):
        dx, dw, db = kernels.conv1d_backward(xd, wd, np.ascontiguousarray(g),
                                             pad_left, need_dx=x.requires_grad)
        return dx, dw, db

    return _node(y, (x, w, b), bwd)


def maxpool2d(x, pool_t, pool_f):
    """Max pooling on (T, C, F); trailing remainder frames/bins are dropped."""
    x = _as_tensor(x)
    T, C, F = x.shape
    to, fo = T // pool_t, F // pool_f
    xr = x.data[:to * pool_t, :, :fo * pool_f]
    win = xr.reshape(to, pool_t, C, fo, pool_f).transpose(0, 2, 3, 1, 4)
    win = win.reshape(to, C, fo, pool_t * pool_f)
    idx = win.argmax(axis=3)
    y = np.take_along_axis(win, idx[..., None], axis=3)[..., 0]

    def bwd(g):
        dwin = np.zeros((to, C, fo, pool_t * pool_f))
        np.put_along_axis(dwin, idx[..., None], g[..., None], axis=3)
        dxr = dwin.reshape(to, C, fo, pool_t, pool_f).transpose(0, 3, 1, 2, 4)
        dx = np.zeros_like(x.data)
        dx[:to * pool_t, :, :fo * pool_f] = dxr.reshape(to * pool_t, C, fo * pool_f)
        return (dx,)

    return _node(y, (x,), bwd)


def batchnorm_eval(x, gamma, beta, mean, var, eps=1e-5):
    """Normalize per channel with fixed (running) statistics.

    x is (T, C, F) or (T, C) with channel axis 1; mean/var are (C,) numpy
    arrays treated as constants, so no gradient flows through them.
    """
    x, gamma, beta = _as_tensor(x), _as_tensor(gamma), _as_tensor(beta)
    cshape = (1, -1) + (1,) * (x.data.ndim - 2)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean.reshape(cshape)) * inv.reshape(cshape)
    y = gamma.data.reshape(cshape) * xhat + beta.data.reshape(cshape)
    red = tuple(i for i in range(x.data.ndim) if i != 1)

    def bwd(g):
        dgamma = (g * xhat).sum(axis=red)
        dbeta = g.sum(axis=red)
        dx = g * (gamma.data * inv).reshape(cshape)
        return dx, dgamma, dbeta

    return _node(y, (x, gamma, beta), bwd)


def batchnorm_train(x, gamma, beta, eps=1e-5):
    """Normalize per channel with batch statistics (gradient flows through them).

    Returns (y, batch_mean, batch_var); the biased variance is used for
    normalization, matching the running-stat update convention of the layer.
    """
    x, gamma, beta = _as_tensor(x), _as_tensor(gamma), _as_tensor(beta)
    red = tuple(i for i in range(x.data.ndim) if i != 1)
    n = float(np.prod([x.shape[i] for i in red]))
    cshape = (1, -1) + (1,) * (x.data.ndim - 2)
    mean = x.data.mean(axis=red)
    var = x.data.var(axis=red)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean.reshape(cshape)) * inv.reshape(cshape)
    y = gamma.data.reshape(cshape) * xhat + beta.data.reshape(cshape)

    def bwd(g):
        dgamma = (g * xhat).sum(axis=red)
        dbeta = g.sum(axis=red)
        dxhat = g * gamma.data.reshape(cshape)
        sum_dxhat = dxhat.sum(axis=red, keepdims=True)
        sum_dxhat_xhat = (dxhat * xhat).sum(axis=red, keepdims=True)
        dx = (inv.reshape(cshape) / n) * (n * dxhat - sum_dxhat - xhat * sum_dxhat_xhat)
        return dx, dgamma, dbeta

    return _node(y, (x, gamma, beta), bwd), mean, var


# -- backward pass -----------------------------------------------------------

def backward(loss):
    """Reverse-mode sweep from a scalar loss; populates .grad on the graph."""
    if loss.size != 1:
        raise ContractError(f"backward requires a scalar loss, got shape {loss.shape}")
    topo, visited = [], set()
    stack = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))

    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward_fn is None or node.grad is None:
            continue
        grads = node._backward_fn(node.grad)
        for parent, g in zip(node._parents, grads):
            if not parent.requires_grad or g is None:
                continue
            if parent.grad is None:
                parent.grad = np.zeros_like(parent.data)
            parent.grad += g


# -- optimizer ----------------------------------------------------------------

class Adam:
    """Adam with the standard defaults (beta1=0.9, beta2=0.999, eps=1e-8)."""

    def __init__(self, params, lr=0.01, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            self.m[i] = b1 * self.m[i] + (1 - b1) * p.grad
            self.v[i] = b2 * self.v[i] + (1 - b2) * (p.grad * p.grad)
            mhat = self.m[i] / bc1
            vhat = self.v[i] / bc2
            p.data -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


# -- checkpoint format ---------------------------------------------------------
# Flat little-endian binary: magic "S6DF", version u32, count u32, then per
# parameter: name length u16, name bytes (utf-8), rank u8, dims u32 x rank,
# float64 data in row-major order.

_MAGIC = b"S6DF"
_VERSION = 1


def save_checkpoint(path, named_arrays):
    """Write {name: array} (or [(name, Tensor)]) to the binary format."""
    if not isinstance(named_arrays, dict):
        named_arrays = {name: t for name, t in named_arrays}
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, len(named_arrays)))
        for name, value in named_arrays.items():
            arr = np.ascontiguousarray(
                value.data if isinstance(value, Tensor) else value, dtype="<f8")
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def load_checkpoint(path):
    """Read the binary checkpoint back as {name: float64 array}."""
    out = {}
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise ContractError(f"{path}: bad checkpoint magic {magic!r}")
        version, count = struct.unpack("<II", fh.read(8))
        if version != _VERSION:
            raise ContractError(f"{path}: unsupported checkpoint version {version}")
        for _ in range(count):
            (nlen,) = struct.unpack("<H", fh.read(2))
            name = fh.read(nlen).decode("utf-8")
            (rank,) = struct.unpack("<B", fh.read(1))
            dims = struct.unpack(f"<{rank}I", fh.read(4 * rank))
            n = int(np.prod(dims)) if rank else 1
            data = np.frombuffer(fh.read(8 * n), dtype="<f8").reshape(dims)
            out[name] = data.astype(np.float64)
    return out
