"""Minimal reverse-mode automatic differentiation over float64 numpy arrays.

Graphs are rebuilt on every forward pass. Each op records its parents and a
closure mapping the upstream gradient to one gradient per parent; ``backward``
walks the graph once in reverse topological order.

Elementwise binary ops accept equal shapes or a leading-batch broadcast (the
smaller shape must be a suffix of the larger). Anything else goes through the
explicit :func:`broadcast_to`.
"""

from __future__ import annotations

import contextlib
import json
from collections import OrderedDict
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

DTYPE = np.float64

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (evaluation only)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class ShapeError(ValueError):
    pass


def _as_array(x) -> np.ndarray:
    return np.asarray(x, dtype=DTYPE)


class Tensor:
    """A node in the computation graph.

    ``data`` is the forward value; ``grad`` is filled by :meth:`backward`.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = _as_array(data)
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self._parents = ()
        self._backward = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else self.data.item()

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self):
        if self.grad is not None:
            self.grad = np.zeros_like(self.data)

    def backward(self):
        if self.data.size != 1:
            raise ShapeError(f"backward requires a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            return
        order = _topological_order(self)
        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            node.grad = g
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


class Parameter(Tensor):
    """A trainable leaf tensor."""

    __slots__ = ("trainable",)

    def __init__(self, data, name=None, trainable=True):
        super().__init__(np.array(data, dtype=DTYPE), requires_grad=True, name=name)
        self.trainable = trainable


def _topological_order(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def _lift(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward):
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _check_batch_broadcast(a, b, opname):
    sa, sb = a.shape, b.shape
    if sa == sb:
        return sa
    if len(sa) >= len(sb) and sa[len(sa) - len(sb):] == sb:
        return sa
    if len(sb) > len(sa) and sb[len(sb) - len(sa):] == sa:
        return sb
    raise ShapeError(f"{opname}: incompatible shapes {sa} and {sb}")


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    lead = g.ndim - len(shape)
    g = g.sum(axis=tuple(range(lead))) if lead > 0 else g
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise


def add(a, b):
    a, b = _lift(a), _lift(b)
    _check_batch_broadcast(a, b, "add")
    return _make(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b):
    a, b = _lift(a), _lift(b)
    _check_batch_broadcast(a, b, "sub")
    return _make(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)),
    )


def mul(a, b):
    a, b = _lift(a), _lift(b)
    _check_batch_broadcast(a, b, "mul")
    return _make(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def neg(a):
    return _make(-a.data, (a,), lambda g: (-g,))


def scale(a, c: float):
    """Multiply by a Python constant."""
    return _make(a.data * c, (a,), lambda g: (g * c,))


def tanh(x):
    y = np.tanh(x.data)

    def backward(g):
        d = np.multiply(y, y, out=np.empty_like(y))
        np.subtract(1.0, d, out=d)
        d *= g
        return (d,)

    return _make(y, (x,), backward)


def sigmoid(x):
    # split by sign so exp never overflows
    z = x.data
    e = np.exp(-np.abs(z))
    y = np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _make(y, (x,), lambda g: (g * y * (1.0 - y),))


def relu(x):
    mask = x.data > 0
    return _make(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


ACTIVATIONS = {"tanh": tanh, "sigmoid": sigmoid, "relu": relu}


def activation(name):
    try:
        return ACTIVATIONS[name]
    except KeyError:
        raise ValueError(f"unknown nonlinearity {name!r}; choose from {sorted(ACTIVATIONS)}") from None


# ---------------------------------------------------------------------------
# shape ops


def reshape(x, shape):
    old = x.shape
    return _make(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def transpose(x, axes):
    inv = np.argsort(axes)
    return _make(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inv),))


def broadcast_to(x, shape):
    x = _lift(x)
    try:
        y = np.broadcast_to(x.data, shape)
    except ValueError:
        raise ShapeError(f"broadcast_to: cannot broadcast {x.shape} to {tuple(shape)}") from None
    return _make(np.ascontiguousarray(y), (x,), lambda g: (_unbroadcast(g, x.shape),))


def concat(tensors, axis=0):
    tensors = [_lift(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat: empty input")
    ndim = tensors[0].ndim
    ax = axis % ndim
    for t in tensors[1:]:
        if t.ndim != ndim or any(
            t.shape[i] != tensors[0].shape[i] for i in range(ndim) if i != ax
        ):
            raise ShapeError(
                f"concat: incompatible shapes {tensors[0].shape} and {t.shape} along axis {axis}"
            )
    sizes = np.cumsum([t.shape[ax] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, sizes, axis=ax))

    return _make(np.concatenate([t.data for t in tensors], axis=ax), tensors, backward)


def sum(x, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy
    shape = x.shape

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _make(x.data.sum(axis=axis, keepdims=keepdims), (x,), backward)


def mean(x, axis=None, keepdims=False):
    shape = x.shape
    if axis is None:
        count = x.data.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        count = int(np.prod([shape[a] for a in axes]))

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, shape).copy(),)

    return _make(x.data.mean(axis=axis, keepdims=keepdims), (x,), backward)


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a, b):
    """Matrix product of ``[m, k]`` and ``[k, n]``."""
    a, b = _lift(a), _lift(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")

    def backward(g):
        ga = g @ b.data.T if a.requires_grad else None
        gb = a.data.T @ g if b.requires_grad else None
        return ga, gb

    return _make(a.data @ b.data, (a, b), backward)


def affine(x, w, b):
    """``x @ w + b`` as one node: ``x [m, k]``, ``w [k, n]``, ``b [n]``."""
    x, w, b = _lift(x), _lift(w), _lift(b)
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0] or b.shape != (w.shape[1],):
        raise ShapeError(f"affine: incompatible shapes {x.shape}, {w.shape} and {b.shape}")
    out = x.data @ w.data
    out += b.data

    def backward(g):
        gx = g @ w.data.T if x.requires_grad else None
        gw = x.data.T @ g if w.requires_grad else None
        return gx, gw, g.sum(axis=0)

    return _make(out, (x, w, b), backward)


def conv1d(signal, kernel, stride=1, bias=None):
    """Valid (unpadded) cross-correlation.

    Two layouts are accepted:

    * ``signal [B, L]``, ``kernel [K]``, scalar ``bias`` -> ``[B, L']``
    * ``signal [B, Cin, L]``, ``kernel [Cout, Cin, K]``, ``bias [Cout]`` -> ``[B, Cout, L']``

    with ``L' = (L - K) // stride + 1``.
    """
    signal, kernel = _lift(signal), _lift(kernel)
    if stride < 1 or int(stride) != stride:
        raise ValueError(f"conv1d: stride must be a positive integer, got {stride}")
    single = kernel.ndim == 1
    if single:
        if signal.ndim != 2:
            raise ShapeError(f"conv1d: signal {signal.shape} must be [batch, L] for kernel {kernel.shape}")
        x = signal.data[:, None, :]
        w = kernel.data[None, None, :]
    else:
        if signal.ndim != 3 or kernel.ndim != 3 or signal.shape[1] != kernel.shape[1]:
            raise ShapeError(f"conv1d: incompatible shapes {signal.shape} and {kernel.shape}")
        x, w = signal.data, kernel.data
    B, cin, L = x.shape
    cout, _, K = w.shape
    if K > L:
        raise ShapeError(f"conv1d: kernel width {K} exceeds signal length {L}")
    Lout = (L - K) // stride + 1
    windows = sliding_window_view(x, K, axis=2)[:, :, ::stride, :]  # [B, cin, Lout, K]
    out = np.einsum("bilk,oik->bol", windows, w, optimize=True)
    parents = [signal, kernel]
    if bias is not None:
        bias = _lift(bias)
        if single and bias.data.size != 1:
            raise ShapeError(f"conv1d: bias must be scalar for a 1-D kernel, got {bias.shape}")
        if not single and bias.shape != (cout,):
            raise ShapeError(f"conv1d: bias shape {bias.shape} does not match {cout} output channels")
        out = out + bias.data.reshape(-1)[None, :, None]
        parents.append(bias)

    def backward(g):
        g3 = g[:, None, :] if single else g
        gw = gx = gb = None
        if kernel.requires_grad:
            gw = np.einsum("bilk,bol->oik", windows, g3, optimize=True)
            gw = gw.reshape(kernel.shape)
        if signal.requires_grad:
            gx = np.zeros_like(x)
            span = stride * (Lout - 1) + 1
            for k in range(K):
                gx[:, :, k:k + span:stride] += np.einsum("bol,oi->bil", g3, w[:, :, k])
            gx = gx.reshape(signal.shape)
        if bias is not None and bias.requires_grad:
            gb = g3.sum(axis=(0, 2)).reshape(bias.shape)
        return (gx, gw, gb)[: len(parents)]

    return _make(out[:, 0, :] if single else out, parents, backward)


# ---------------------------------------------------------------------------
# losses


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def cross_entropy(logits, labels):
    """Mean negative log-likelihood of ``labels`` under ``softmax(logits)``."""
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2:
        raise ShapeError(f"cross_entropy: logits must be [batch, C], got {logits.shape}")
    B, C = logits.shape
    if C < 2:
        raise ValueError(f"cross_entropy: need at least 2 classes, got {C}")
    if labels.shape != (B,):
        raise ShapeError(f"cross_entropy: labels shape {labels.shape} does not match logits {logits.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= C):
        raise ValueError(f"cross_entropy: labels must lie in [0, {C}), got {labels.tolist()}")
    logp = log_softmax(logits.data)
    rows = np.arange(B)
    loss = -logp[rows, labels].mean()

    def backward(g):
        p = np.exp(logp)
        p[rows, labels] -= 1.0
        return (p * (g / B),)

    return _make(np.array(loss), (logits,), backward)


# ---------------------------------------------------------------------------
# modules


class Module:
    """Container that discovers Parameters and sub-Modules from its attributes."""

    def named_parameters(self, prefix=""):
        seen = set()
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, Parameter):
                if id(value) in seen:
                    raise ValueError(f"parameter {full} registered twice")
                seen.add(id(value))
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(full + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}.")
                    elif isinstance(item, Parameter):
                        yield f"{full}.{i}", item

    def parameters(self):
        params = [p for _, p in self.named_parameters()]
        if len({id(p) for p in params}) != len(params):
            raise ValueError("a parameter is registered more than once")
        return params

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def state_dict(self):
        return OrderedDict((name, p.data.copy()) for name, p in self.named_parameters())

    def load_state_dict(self, state):
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        extra = set(state) - set(own)
        if missing or extra:
            raise KeyError(f"state mismatch: missing={sorted(missing)} unexpected={sorted(extra)}")
        for name, p in own.items():
            arr = _as_array(state[name])
            if arr.shape != p.shape:
                raise ShapeError(f"{name}: checkpoint shape {arr.shape} != parameter shape {p.shape}")
            p.data = arr.copy()
            p.zero_grad()


class Linear(Module):
    def __init__(self, n_in, n_out, rng, name="linear"):
        bound = 1.0 / np.sqrt(n_in)
        self.weight = Parameter(rng.uniform(-bound, bound, size=(n_in, n_out)), name=f"{name}.weight")
        self.bias = Parameter(rng.uniform(-bound, bound, size=(n_out,)), name=f"{name}.bias")

    def __call__(self, x):
        return affine(x, self.weight, self.bias)


class MLP(Module):
    """Feed-forward stack; the last layer is linear."""

    def __init__(self, widths, rng, nonlinearity="tanh"):
        self.widths = list(widths)
        self.nonlinearity = nonlinearity
        self.layers = [Linear(a, b, rng, name=f"layers.{i}") for i, (a, b) in enumerate(zip(widths[:-1], widths[1:]))]

    def __call__(self, x):
        act = activation(self.nonlinearity)
        for layer in self.layers[:-1]:
            x = act(layer(x))
        return self.layers[-1](x)


# ---------------------------------------------------------------------------
# optimizers


def adam_step(params, grads, state, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update, in place on ``params``.

    ``state`` holds ``t`` and per-parameter first/second moments; it is
    initialised on first use and returned.
    """
    if "t" not in state:
        state["t"] = 0
        state["m"] = [np.zeros_like(p.data) for p in params]
        state["v"] = [np.zeros_like(p.data) for p in params]
    state["t"] += 1
    t = state["t"]
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for p, g, m, v in zip(params, grads, state["m"], state["v"]):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p.data = p.data - lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return state


class Adam:
    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        self.params = [p for p in params if p.trainable]
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.state = {}

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        adam_step(self.params, [p.grad for p in self.params], self.state,
                  self.lr, self.betas[0], self.betas[1], self.eps)


class SGD:
    def __init__(self, params, lr=1e-2):
        self.params = [p for p in params if p.trainable]
        self.lr = lr

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        for p in self.params:
            p.data = p.data - self.lr * p.grad


def make_optimizer(name, params, lr):
    if name == "adam":
        return Adam(params, lr=lr)
    if name == "sgd":
        return SGD(params, lr=lr)
    raise ValueError(f"unknown optimizer {name!r}; choose 'adam' or 'sgd'")


# ---------------------------------------------------------------------------
# checkpoints
#
# Parameter files are JSON: {"format": "intop-params/1", "arrays": {name:
# {"shape": [...], "data": [...]}}}. Floats are written with Python's
# shortest round-trip repr, so load(save(x)) is bit-exact for finite values.

PARAMS_FORMAT = "intop-params/1"


def arrays_to_json(arrays):
    return {
        name: {"shape": list(arr.shape), "data": [float(v) for v in np.asarray(arr, dtype=DTYPE).reshape(-1)]}
        for name, arr in arrays.items()
    }


def arrays_from_json(blob):
    out = OrderedDict()
    for name, entry in blob.items():
        shape = tuple(entry["shape"])
        data = np.array(entry["data"], dtype=DTYPE)
        if data.size != int(np.prod(shape)):
            raise ShapeError(f"{name}: {data.size} values do not fill shape {shape}")
        out[name] = data.reshape(shape)
    return out


def save_params(path, arrays):
    blob = {"format": PARAMS_FORMAT, "arrays": arrays_to_json(arrays)}
    Path(path).write_text(json.dumps(blob, indent=1) + "\n")


def load_params(path):
    blob = json.loads(Path(path).read_text())
    if blob.get("format") != PARAMS_FORMAT:
        raise ValueError(f"{path}: not an {PARAMS_FORMAT} file")
    return arrays_from_json(blob["arrays"])
