"""Dense float64 tensors with reverse-mode automatic differentiation.

A deliberately small engine: it provides exactly the operations the rest of
the package needs (matmul, causal 1-D convolutions, a handful of elementwise
functions, reductions, slicing/stacking, and the Gaussian reparameterization
trick), plus Adam. Everything is 64-bit and single-threaded per graph;
independent graphs may run on separate workers as long as tensors are never
shared between them.

Gradients accumulate additively into ``Tensor.grad`` and are only cleared by
an explicit ``zero_grad`` (directly or through the optimizer), so cross-batch
leakage is always a caller bug rather than a silent reset.
"""

from __future__ import annotations

import math
from contextlib import contextmanager

import numpy as np

from .errors import ContractError, DimensionError, DomainError, ParameterError

_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Disable graph recording inside the block (pure-numpy forward passes)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled():
    return _GRAD_ENABLED


class Tensor:
    """N-dimensional float64 array with an optional gradient buffer.

    ``requires_grad`` marks leaves (parameters); tensors produced by
    operations on such leaves carry a backward rule and parent references,
    which is all ``backward`` needs to replay the tape in reverse.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_grad_fn", "name")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._grad_fn = None
        self.name = name

    # -- basic introspection ------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def item(self):
        if self.data.size != 1:
            raise ContractError(f"item() needs a single value, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self):
        """Constant view sharing this tensor's data, cut off from the graph."""
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    # -- operator sugar -----------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def tanh(self):
        return tanh(self)

    def relu(self):
        return relu(self)

    def softplus(self):
        return softplus(self)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def square(self):
        return square(self)

    def sum(self, axis=None):
        return tsum(self, axis=axis)

    def mean(self, axis=None):
        return tmean(self, axis=axis)

    def reshape(self, *shape):
        return reshape(self, *shape)


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _is_scalar(t):
    return t.data.size == 1


def _make(data, parents, grad_fn):
    """Record one operation on the implicit tape."""
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad or p._grad_fn is not None for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._grad_fn = grad_fn
    return out


# ---------------------------------------------------------------------------
# Backward pass
# ---------------------------------------------------------------------------


class ComputationTape:
    """Topologically ordered record of the operations below one output.

    Built on demand from the parent links: every node's inputs appear before
    the node itself, and ``backprop`` visits each node exactly once.
    """

    def __init__(self, nodes):
        self.nodes = nodes

    @classmethod
    def trace(cls, root):
        order = []
        seen = set()
        stack = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if id(node) in seen:
                continue
            if expanded:
                seen.add(id(node))
                order.append(node)
                continue
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        return cls(order)

    def backprop(self, root):
        root._accumulate(np.ones_like(root.data))
        for node in reversed(self.nodes):
            if node._grad_fn is not None and node.grad is not None:
                node._grad_fn(node.grad)


def backward(loss):
    """Populate ``grad`` on every tensor reachable from the scalar ``loss``."""
    if not isinstance(loss, Tensor):
        raise ContractError("backward expects a Tensor")
    if loss.data.size != 1:
        raise ContractError(f"backward expects a scalar loss, got shape {loss.shape}")
    ComputationTape.trace(loss).backprop(loss)


# ---------------------------------------------------------------------------
# Elementwise operations
# ---------------------------------------------------------------------------


def _binary_shapes(a, b, opname):
    if a.shape == b.shape or _is_scalar(a) or _is_scalar(b):
        return
    raise DimensionError(f"{opname}: shapes {a.shape} and {b.shape} do not match")


def _reduce_to(g, t):
    # Gradient of a scalar operand is the sum of the incoming gradient.
    if _is_scalar(t) and g.shape != t.data.shape:
        return np.array(g.sum()).reshape(t.data.shape)
    return g


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _binary_shapes(a, b, "add")
    out_data = a.data + b.data

    def grad_fn(g):
        if a.requires_grad or a._grad_fn is not None:
            a._accumulate(_reduce_to(g, a))
        if b.requires_grad or b._grad_fn is not None:
            b._accumulate(_reduce_to(g, b))

    return _make(out_data, (a, b), grad_fn)


def sub(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _binary_shapes(a, b, "sub")
    out_data = a.data - b.data

    def grad_fn(g):
        if a.requires_grad or a._grad_fn is not None:
            a._accumulate(_reduce_to(g, a))
        if b.requires_grad or b._grad_fn is not None:
            b._accumulate(_reduce_to(-g, b))

    return _make(out_data, (a, b), grad_fn)


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _binary_shapes(a, b, "mul")
    out_data = a.data * b.data

    def grad_fn(g):
        if a.requires_grad or a._grad_fn is not None:
            a._accumulate(_reduce_to(g * b.data, a))
        if b.requires_grad or b._grad_fn is not None:
            b._accumulate(_reduce_to(g * a.data, b))

    return _make(out_data, (a, b), grad_fn)


def scale(x, c):
    """Multiply by a Python constant (no gradient w.r.t. the constant)."""
    x = _as_tensor(x)
    c = float(c)
    out_data = x.data * c

    def grad_fn(g):
        x._accumulate(g * c)

    return _make(out_data, (x,), grad_fn)


def tanh(x):
    x = _as_tensor(x)
    out_data = np.tanh(x.data)

    def grad_fn(g):
        x._accumulate(g * (1.0 - out_data * out_data))

    return _make(out_data, (x,), grad_fn)


def relu(x):
    x = _as_tensor(x)
    out_data = np.maximum(x.data, 0.0)

    def grad_fn(g):
        x._accumulate(g * (x.data > 0.0))

    return _make(out_data, (x,), grad_fn)


def softplus(x):
    # log(1 + e^x) computed stably so large |x| never overflows.
    x = _as_tensor(x)
    out_data = np.maximum(x.data, 0.0) + np.log1p(np.exp(-np.abs(x.data)))

    def grad_fn(g):
        sig = 1.0 / (1.0 + np.exp(-x.data))
        x._accumulate(g * sig)

    return _make(out_data, (x,), grad_fn)


def exp(x):
    x = _as_tensor(x)
    out_data = np.exp(x.data)

    def grad_fn(g):
        x._accumulate(g * out_data)

    return _make(out_data, (x,), grad_fn)


def log(x):
    x = _as_tensor(x)
    if np.any(x.data <= 0.0):
        raise DomainError("log: input has non-positive entries")
    out_data = np.log(x.data)

    def grad_fn(g):
        x._accumulate(g / x.data)

    return _make(out_data, (x,), grad_fn)


def square(x):
    x = _as_tensor(x)
    out_data = x.data * x.data

    def grad_fn(g):
        x._accumulate(g * 2.0 * x.data)

    return _make(out_data, (x,), grad_fn)


def clamp(x, lo, hi):
    """Hard clamp; gradient passes through only where lo <= x <= hi."""
    x = _as_tensor(x)
    out_data = np.clip(x.data, lo, hi)

    def grad_fn(g):
        x._accumulate(g * ((x.data >= lo) & (x.data <= hi)))

    return _make(out_data, (x,), grad_fn)


def minimum(a, b):
    """Elementwise minimum; the gradient follows the smaller operand (ties -> a)."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise DimensionError(f"minimum: shapes {a.shape} and {b.shape} do not match")
    take_a = a.data <= b.data
    out_data = np.where(take_a, a.data, b.data)

    def grad_fn(g):
        if a.requires_grad or a._grad_fn is not None:
            a._accumulate(g * take_a)
        if b.requires_grad or b._grad_fn is not None:
            b._accumulate(g * ~take_a)

    return _make(out_data, (a, b), grad_fn)


# ---------------------------------------------------------------------------
# Reductions, shaping, stacking
# ---------------------------------------------------------------------------


def tsum(x, axis=None):
    x = _as_tensor(x)
    out_data = x.data.sum(axis=axis)

    def grad_fn(g):
        if axis is None:
            x._accumulate(np.full_like(x.data, float(g)))
        else:
            x._accumulate(np.broadcast_to(np.expand_dims(g, axis), x.data.shape).copy())

    return _make(out_data, (x,), grad_fn)


def tmean(x, axis=None):
    x = _as_tensor(x)
    n = x.data.size if axis is None else x.data.shape[axis]
    return scale(tsum(x, axis=axis), 1.0 / n)


def reshape(x, *shape):
    x = _as_tensor(x)
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = tuple(shape[0])
    out_data = x.data.reshape(shape)

    def grad_fn(g):
        x._accumulate(g.reshape(x.data.shape))

    return _make(out_data, (x,), grad_fn)


def slice_rows(x, start, stop):
    x = _as_tensor(x)
    out_data = x.data[start:stop].copy()

    def grad_fn(g):
        buf = np.zeros_like(x.data)
        buf[start:stop] = g
        x._accumulate(buf)

    return _make(out_data, (x,), grad_fn)


def slice_cols(x, start, stop):
    x = _as_tensor(x)
    out_data = x.data[:, start:stop].copy()

    def grad_fn(g):
        buf = np.zeros_like(x.data)
        buf[:, start:stop] = g
        x._accumulate(buf)

    return _make(out_data, (x,), grad_fn)


def concat_rows(tensors):
    tensors = [_as_tensor(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=0)
    offsets = np.cumsum([0] + [t.data.shape[0] for t in tensors])

    def grad_fn(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad or t._grad_fn is not None:
                t._accumulate(g[lo:hi])

    return _make(out_data, tuple(tensors), grad_fn)


def concat_cols(tensors):
    tensors = [_as_tensor(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=1)
    offsets = np.cumsum([0] + [t.data.shape[1] for t in tensors])

    def grad_fn(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad or t._grad_fn is not None:
                t._accumulate(g[:, lo:hi])

    return _make(out_data, tuple(tensors), grad_fn)


def prepend_zero_rows(x, n):
    """Causal left padding: n zero rows stacked above x."""
    x = _as_tensor(x)
    if n == 0:
        return x
    out_data = np.concatenate([np.zeros((n,) + x.data.shape[1:]), x.data], axis=0)

    def grad_fn(g):
        x._accumulate(g[n:])

    return _make(out_data, (x,), grad_fn)


def time_major(x, batch, length):
    """[batch*length, D] row blocks -> [length, batch*D] columns per sequence.

    Reorders a stack of per-sequence rows (sequence-major) into a single
    time-major matrix whose columns hold the channels of every sequence, so
    channel-independent sequence ops can process a whole batch at once.
    """
    x = _as_tensor(x)
    if x.data.ndim != 2 or x.data.shape[0] != batch * length:
        raise DimensionError(f"time_major: shape {x.shape} incompatible with batch={batch}, length={length}")
    d = x.data.shape[1]
    out_data = x.data.reshape(batch, length, d).transpose(1, 0, 2).reshape(length, batch * d)

    def grad_fn(g):
        x._accumulate(g.reshape(length, batch, d).transpose(1, 0, 2).reshape(batch * length, d))

    return _make(out_data, (x,), grad_fn)


# ---------------------------------------------------------------------------
# Linear algebra and convolution
# ---------------------------------------------------------------------------


def matmul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: shapes {a.shape} and {b.shape} are not compatible")
    out_data = a.data @ b.data

    def grad_fn(g):
        if a.requires_grad or a._grad_fn is not None:
            a._accumulate(g @ b.data.T)
        if b.requires_grad or b._grad_fn is not None:
            b._accumulate(a.data.T @ g)

    return _make(out_data, (a, b), grad_fn)


def add_bias(x, b):
    """Add a length-H bias vector to every row of an [N, H] matrix."""
    x, b = _as_tensor(x), _as_tensor(b)
    if x.data.ndim != 2 or b.data.ndim != 1 or x.shape[1] != b.shape[0]:
        raise DimensionError(f"add_bias: shapes {x.shape} and {b.shape} are not compatible")
    out_data = x.data + b.data

    def grad_fn(g):
        if x.requires_grad or x._grad_fn is not None:
            x._accumulate(g)
        if b.requires_grad or b._grad_fn is not None:
            b._accumulate(g.sum(axis=0))

    return _make(out_data, (x, b), grad_fn)


def _conv_geometry(t, k, stride, dilation):
    if stride < 1 or dilation < 1:
        raise ParameterError(f"conv1d: stride and dilation must be positive, got {stride}, {dilation}")
    if t < 1:
        raise DimensionError("conv1d: signal must have at least one step")
    pad = (k - 1) * dilation
    t_out = -(-t // stride)  # ceil(t / stride)
    return pad, t_out


def conv1d_causal(signal, kernel, stride=1, dilation=1):
    """Causal strided 1-D convolution.

    ``signal`` is [T, C_in], ``kernel`` is [K, C_in, C_out]. The signal is
    left-padded with (K-1)*dilation zeros, so output position t reads inputs
    at indices t*stride, t*stride - dilation, ..., never anything later.
    Output length is ceil(T / stride).
    """
    signal, kernel = _as_tensor(signal), _as_tensor(kernel)
    if signal.data.ndim != 2 or kernel.data.ndim != 3:
        raise DimensionError(f"conv1d_causal: expected [T,C_in] and [K,C_in,C_out], got {signal.shape}, {kernel.shape}")
    if signal.shape[1] != kernel.shape[1]:
        raise DimensionError(f"conv1d_causal: channel mismatch between {signal.shape} and {kernel.shape}")
    t, _ = signal.shape
    k, _, c_out = kernel.shape
    pad, t_out = _conv_geometry(t, k, stride, dilation)

    padded = np.concatenate([np.zeros((pad, signal.shape[1])), signal.data], axis=0)
    last = (t_out - 1) * stride
    out_data = np.zeros((t_out, c_out))
    for j in range(k):
        start = pad - j * dilation
        sl = padded[start : start + last + 1 : stride]
        out_data += sl @ kernel.data[j]

    def grad_fn(g):
        if kernel.requires_grad or kernel._grad_fn is not None:
            gk = np.zeros_like(kernel.data)
            for j in range(k):
                start = pad - j * dilation
                sl = padded[start : start + last + 1 : stride]
                gk[j] = sl.T @ g
            kernel._accumulate(gk)
        if signal.requires_grad or signal._grad_fn is not None:
            gp = np.zeros_like(padded)
            for j in range(k):
                start = pad - j * dilation
                gp[start : start + last + 1 : stride] += g @ kernel.data[j].T
            signal._accumulate(gp[pad:])

    return _make(out_data, (signal, kernel), grad_fn)


def conv1d_depthwise(signal, taps, stride=1, dilation=1):
    """Causal strided convolution applying one shared tap vector to every channel.

    Same geometry as ``conv1d_causal`` with a [K] filter broadcast across all
    C channels independently; gradients w.r.t. the shared taps accumulate
    over channels. This is the channel-independent filtering the wavelet
    transforms are built on.
    """
    signal, taps = _as_tensor(signal), _as_tensor(taps)
    if signal.data.ndim != 2 or taps.data.ndim != 1:
        raise DimensionError(f"conv1d_depthwise: expected [T,C] and [K], got {signal.shape}, {taps.shape}")
    t, _ = signal.shape
    k = taps.shape[0]
    pad, t_out = _conv_geometry(t, k, stride, dilation)

    padded = np.concatenate([np.zeros((pad, signal.shape[1])), signal.data], axis=0)
    last = (t_out - 1) * stride
    out_data = np.zeros((t_out, signal.shape[1]))
    for j in range(k):
        start = pad - j * dilation
        out_data += taps.data[j] * padded[start : start + last + 1 : stride]

    def grad_fn(g):
        if taps.requires_grad or taps._grad_fn is not None:
            gt = np.zeros_like(taps.data)
            for j in range(k):
                start = pad - j * dilation
                gt[j] = float((g * padded[start : start + last + 1 : stride]).sum())
            taps._accumulate(gt)
        if signal.requires_grad or signal._grad_fn is not None:
            gp = np.zeros_like(padded)
            for j in range(k):
                start = pad - j * dilation
                gp[start : start + last + 1 : stride] += taps.data[j] * g
            signal._accumulate(gp[pad:])

    return _make(out_data, (signal, taps), grad_fn)


def gaussian_rsample(mean, log_std, noise):
    """Reparameterized Gaussian draw: mean + exp(log_std) * noise.

    Gradients flow into mean and log_std; the caller-supplied standard-normal
    noise is treated as a constant.
    """
    mean, log_std, noise = _as_tensor(mean), _as_tensor(log_std), _as_tensor(noise)
    if not (mean.shape == log_std.shape == noise.shape):
        raise DimensionError(
            f"gaussian_rsample: shapes {mean.shape}, {log_std.shape}, {noise.shape} must agree"
        )
    return add(mean, mul(exp(log_std), noise.detach()))


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------


def adam_step(param, state, lr=3e-4, beta1=0.9, beta2=0.999, eps=1e-8):
    """One Adam update on a single parameter; ``state`` holds (m, v, t)."""
    if param.grad is None:
        return
    state["t"] += 1
    t = state["t"]
    state["m"] = beta1 * state["m"] + (1.0 - beta1) * param.grad
    state["v"] = beta2 * state["v"] + (1.0 - beta2) * param.grad * param.grad
    m_hat = state["m"] / (1.0 - beta1**t)
    v_hat = state["v"] / (1.0 - beta2**t)
    param.data -= lr * m_hat / (np.sqrt(v_hat) + eps)


class Adam:
    """Adam over a list of parameter tensors (lr 3e-4 by default)."""

    def __init__(self, params, lr=3e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.state = [{"m": np.zeros_like(p.data), "v": np.zeros_like(p.data), "t": 0} for p in self.params]

    def step(self):
        for p, s in zip(self.params, self.state):
            adam_step(p, s, self.lr, self.beta1, self.beta2, self.eps)

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()


# ---------------------------------------------------------------------------
# Network building blocks
# ---------------------------------------------------------------------------


def _init_linear(rng, in_dim, out_dim):
    lim = 1.0 / math.sqrt(in_dim)
    w = rng.uniform(-lim, lim, size=(in_dim, out_dim))
    b = rng.uniform(-lim, lim, size=(out_dim,))
    return w, b


class Linear:
    """Affine layer y = x W + b with fan-in uniform initialization."""

    def __init__(self, in_dim, out_dim, rng):
        w, b = _init_linear(rng, in_dim, out_dim)
        self.w = Tensor(w, requires_grad=True)
        self.b = Tensor(b, requires_grad=True)

    def __call__(self, x, frozen=False):
        w, b = (self.w.detach(), self.b.detach()) if frozen else (self.w, self.b)
        return add_bias(matmul(x, w), b)

    def params(self):
        return {"w": self.w, "b": self.b}


class MLP:
    """Fully connected stack with ReLU between hidden layers, linear output."""

    def __init__(self, dims, rng):
        self.layers = [Linear(a, b, rng) for a, b in zip(dims[:-1], dims[1:])]

    def __call__(self, x, frozen=False):
        h = x
        for layer in self.layers[:-1]:
            h = relu(layer(h, frozen=frozen))
        return self.layers[-1](h, frozen=frozen)

    def params(self):
        out = {}
        for i, layer in enumerate(self.layers):
            for k, v in layer.params().items():
                out[f"layers.{i}.{k}"] = v
        return out


def named_parameters(prefix, obj):
    """Flatten an object exposing ``params() -> dict`` into (name, tensor) pairs."""
    return [(f"{prefix}.{k}", v) for k, v in obj.params().items()]
