"""Reverse-mode autodiff on dense float64 numpy arrays.

A ``Tensor`` wraps an ndarray and remembers which primitive produced it.
Calling :func:`backward` builds a :class:`GradTape` (the reverse topological
order of the recorded primitives) and replays vector-Jacobian products from a
scalar loss down to any requested leaf or intermediate node. Only the op set
needed by the codec, the predictor and the priority algorithms is provided;
this is deliberately not a general-purpose framework.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "GradTape",
    "backward",
    "as_tensor",
    "add",
    "sub",
    "mul",
    "div",
    "matmul",
    "relu",
    "sigmoid",
    "tanh",
    "sqrt",
    "tsum",
    "mean",
    "mse",
    "reshape",
    "slice_last",
    "concat_last",
]


def _asarray(x):
    return np.asarray(x, dtype=np.float64)


class Tensor:
    """A float64 array plus the bookkeeping needed to replay adjoints."""

    __slots__ = ("data", "grad", "_parents", "_vjp")

    def __init__(self, data, parents=(), vjp=None):
        self.data = _asarray(data)
        self.grad = None
        self._parents = parents
        self._vjp = vjp

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def backward(self):
        backward(self)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape})"

    # operator sugar; constants are lifted to leaf tensors
    def __add__(self, other):
        return add(self, as_tensor(other))

    def __radd__(self, other):
        return add(as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, as_tensor(other))

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, as_tensor(other))

    def __rmul__(self, other):
        return mul(as_tensor(other), self)

    def __truediv__(self, other):
        return div(self, as_tensor(other))

    def __neg__(self):
        return mul(self, as_tensor(-1.0))

    def __matmul__(self, other):
        return matmul(self, as_tensor(other))


def as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


def _unbroadcast(grad, shape):
    """Sum `grad` back down to `shape` (reverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class GradTape:
    """Reverse topological order of every primitive reachable from a root.

    The tape is built iteratively (no recursion limit concerns for BPTT
    graphs) and each node is visited exactly once during replay.
    """

    def __init__(self, root: Tensor):
        order = []
        visited = set()
        stack = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        self.root = root
        self.order = order  # parents precede children
        self._ids = visited

    def __contains__(self, t: Tensor):
        return id(t) in self._ids

    def run(self):
        """Seed the root with grad 1 and replay adjoints once per node."""
        for node in self.order:
            node.grad = None
        self.root.grad = np.ones_like(self.root.data)
        for node in reversed(self.order):
            if node._vjp is None or node.grad is None:
                continue
            for parent, g in zip(node._parents, node._vjp(node.grad)):
                if g is None:
                    continue
                if parent.grad is None:
                    parent.grad = g
                else:
                    parent.grad = parent.grad + g


def backward(loss: Tensor, targets=None):
    """Backpropagate from a scalar loss; return grads for `targets` if given.

    Raises ValueError when the loss is not scalar or a requested target was
    never touched by the computation that produced the loss.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    tape = GradTape(loss)
    tape.run()
    if targets is None:
        return None
    out = []
    for t in targets:
        if t not in tape:
            raise ValueError("target tensor is not on the tape of this loss")
        out.append(t.grad if t.grad is not None else np.zeros_like(t.data))
    return out


# ---------------------------------------------------------------------------
# primitives: forward + registered adjoint
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data + b.data

    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return Tensor(out_data, (a, b), vjp)


def sub(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data - b.data

    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return Tensor(out_data, (a, b), vjp)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data * b.data

    def vjp(g):
        return (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        )

    return Tensor(out_data, (a, b), vjp)


def div(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data / b.data

    def vjp(g):
        return (
            _unbroadcast(g / b.data, a.data.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape),
        )

    return Tensor(out_data, (a, b), vjp)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """2-D matrix product (batch rows x features)."""
    out_data = a.data @ b.data

    def vjp(g):
        return g @ b.data.T, a.data.T @ g

    return Tensor(out_data, (a, b), vjp)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return Tensor(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def sigmoid(x: Tensor) -> Tensor:
    d = x.data
    out_data = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.abs(d))),
                        np.exp(-np.abs(d)) / (1.0 + np.exp(-np.abs(d))))

    def vjp(g):
        return (g * out_data * (1.0 - out_data),)

    return Tensor(out_data, (x,), vjp)


def tanh(x: Tensor) -> Tensor:
    out_data = np.tanh(x.data)

    def vjp(g):
        return (g * (1.0 - out_data * out_data),)

    return Tensor(out_data, (x,), vjp)


def sqrt(x: Tensor) -> Tensor:
    out_data = np.sqrt(x.data)

    def vjp(g):
        return (g * 0.5 / out_data,)

    return Tensor(out_data, (x,), vjp)


def tsum(x: Tensor, axis=None, keepdims=False) -> Tensor:
    out_data = x.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, x.data.shape).astype(np.float64, copy=True),)
        gg = g
        if not keepdims:
            gg = np.expand_dims(g, axis)
        return (np.broadcast_to(gg, x.data.shape).astype(np.float64, copy=True),)

    return Tensor(out_data, (x,), vjp)


def mean(x: Tensor, axis=None, keepdims=False) -> Tensor:
    if axis is None:
        n = x.data.size
    elif isinstance(axis, tuple):
        n = int(np.prod([x.data.shape[a] for a in axis]))
    else:
        n = x.data.shape[axis]
    return mul(tsum(x, axis=axis, keepdims=keepdims), as_tensor(1.0 / n))


def mse(a: Tensor, b: Tensor) -> Tensor:
    """(1/N) * sum((a - b)^2) over all elements."""
    if a.data.shape != b.data.shape:
        raise ValueError(f"mse shape mismatch: {a.data.shape} vs {b.data.shape}")
    diff = a.data - b.data
    n = diff.size
    out_data = np.array(np.mean(diff * diff))

    def vjp(g):
        scaled = (2.0 / n) * g * diff
        return scaled, -scaled

    return Tensor(out_data, (a, b), vjp)


def reshape(x: Tensor, shape) -> Tensor:
    out_data = x.data.reshape(shape)

    def vjp(g):
        return (g.reshape(x.data.shape),)

    return Tensor(out_data, (x,), vjp)


def slice_last(x: Tensor, start: int, stop: int) -> Tensor:
    """Slice [start:stop] along the last axis (used for LSTM gate unpacking)."""
    out_data = x.data[..., start:stop]

    def vjp(g):
        full = np.zeros_like(x.data)
        full[..., start:stop] = g
        return (full,)

    return Tensor(out_data, (x,), vjp)


def concat_last(parts) -> Tensor:
    """Concatenate tensors along the last axis."""
    parts = [as_tensor(p) for p in parts]
    widths = [p.data.shape[-1] for p in parts]
    out_data = np.concatenate([p.data for p in parts], axis=-1)

    def vjp(g):
        grads, ofs = [], 0
        for w in widths:
            grads.append(g[..., ofs:ofs + w])
            ofs += w
        return tuple(grads)

    return Tensor(out_data, tuple(parts), vjp)
