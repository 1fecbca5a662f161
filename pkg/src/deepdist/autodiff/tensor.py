"""Dense tensors with reverse-mode automatic differentiation.

Every operation returns a new :class:`Tensor` that remembers its inputs and a
closure propagating the output gradient back to them. Calling
:meth:`Tensor.backward` on a scalar result builds a :class:`Graph` (nodes in
topological order) and runs the closures in reverse order, each exactly once.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from deepdist.errors import ShapeError


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "parents", "backward_fn", "op", "name")

    def __init__(self, data, requires_grad: bool = False, parents: tuple = (),
                 backward_fn: Callable | None = None, op: str = "leaf", name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self.parents = parents
        self.backward_fn = backward_fn
        self.op = op
        self.name = name

    def __repr__(self):
        return f"Tensor(op={self.op}, shape={self.shape})"

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self):
        self.grad = None

    def accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True).reshape(self.shape)
        else:
            self.grad += g

    def backward(self, grad=None):
        """Backpropagate from this tensor. ``grad`` defaults to 1 for scalars."""
        if grad is None:
            if self.size != 1:
                raise ShapeError(f"backward: implicit seed needs a scalar, got shape {self.shape}")
            grad = np.ones(self.shape)
        Graph.from_root(self).backward(grad)

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __getitem__(self, idx):
        return slice_(self, idx)


class Graph:
    """Topologically ordered nodes reachable from a root tensor."""

    def __init__(self, nodes: list[Tensor]):
        self.nodes = nodes

    @classmethod
    def from_root(cls, root: Tensor) -> "Graph":
        order: list[Tensor] = []
        seen: set[int] = set()
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
            for p in node.parents:
                if id(p) not in seen:
                    stack.append((p, False))
        return cls(order)

    def backward(self, seed):
        root = self.nodes[-1]
        root.accumulate(np.asarray(seed, dtype=np.float64))
        for node in reversed(self.nodes):
            if node.backward_fn is not None and node.grad is not None:
                node.backward_fn(node.grad)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _needs_grad(*ts: Tensor) -> bool:
    return any(t.requires_grad for t in ts)


def make_node(data, parents: Sequence[Tensor], backward_fn: Callable, op: str) -> Tensor:
    """Wrap a forward value as a graph node; used by layers and custom losses."""
    parents = tuple(parents)
    if _needs_grad(*parents):
        return Tensor(data, True, parents, backward_fn, op)
    return Tensor(data, False, (), None, op)


def _push(t: Tensor, g):
    if t.requires_grad:
        t.accumulate(g)


def _check_elementwise(op: str, a: Tensor, b: Tensor):
    if a.shape != b.shape and a.size != 1 and b.size != 1:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


def _reduce_to(g, shape):
    # gradient of a scalar-broadcast operand
    if g.shape == shape:
        return g
    return np.sum(g).reshape(shape)


# --- elementwise binary -------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_elementwise("add", a, b)

    def back(g):
        _push(a, _reduce_to(g, a.shape))
        _push(b, _reduce_to(g, b.shape))

    return make_node(a.data + b.data, (a, b), back, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_elementwise("sub", a, b)

    def back(g):
        _push(a, _reduce_to(g, a.shape))
        _push(b, _reduce_to(-g, b.shape))

    return make_node(a.data - b.data, (a, b), back, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_elementwise("mul", a, b)

    def back(g):
        _push(a, _reduce_to(g * b.data, a.shape))
        _push(b, _reduce_to(g * a.data, b.shape))

    return make_node(a.data * b.data, (a, b), back, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_elementwise("div", a, b)
    out = a.data / b.data

    def back(g):
        _push(a, _reduce_to(g / b.data, a.shape))
        _push(b, _reduce_to(-g * out / b.data, b.shape))

    return make_node(out, (a, b), back, "div")


def matmul(a, b) -> Tensor:
    """Matrix product of 2-D tensors, or a batch of rows ``[..., n] @ [n, m]``."""
    a, b = as_tensor(a), as_tensor(b)
    if b.data.ndim != 2 or a.data.ndim < 2 or a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")

    def back(g):
        if a.requires_grad:
            a.accumulate(g @ b.data.T)
        if b.requires_grad:
            a2 = a.data.reshape(-1, a.shape[-1])
            b.accumulate(a2.T @ g.reshape(-1, b.shape[1]))

    return make_node(a.data @ b.data, (a, b), back, "matmul")


# --- elementwise unary --------------------------------------------------------


def _unary(x, fwd, dfdx_from, op: str) -> Tensor:
    x = as_tensor(x)
    out = fwd(x.data)

    def back(g):
        _push(x, g * dfdx_from(x.data, out))

    return make_node(out, (x,), back, op)


def _sigmoid(v):
    return 0.5 * (1.0 + np.tanh(0.5 * v))


def tanh(x) -> Tensor:
    return _unary(x, np.tanh, lambda v, o: 1.0 - o * o, "tanh")


def sigmoid(x) -> Tensor:
    return _unary(x, _sigmoid, lambda v, o: o * (1.0 - o), "sigmoid")


def relu(x) -> Tensor:
    return _unary(x, lambda v: np.maximum(v, 0.0), lambda v, o: (v > 0).astype(np.float64), "relu")


def exp(x) -> Tensor:
    return _unary(x, np.exp, lambda v, o: o, "exp")


def log(x) -> Tensor:
    return _unary(x, np.log, lambda v, o: 1.0 / v, "log")


def softplus(x) -> Tensor:
    return _unary(x, lambda v: np.logaddexp(0.0, v), lambda v, o: _sigmoid(v), "softplus")


# --- structural ---------------------------------------------------------------


def slice_(x, idx) -> Tensor:
    x = as_tensor(x)
    out = x.data[idx]

    def back(g):
        if x.requires_grad:
            full = np.zeros(x.shape)
            np.add.at(full, idx, g)
            x.accumulate(full)

    return make_node(np.array(out), (x,), back, "slice")


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    nd = ts[0].data.ndim
    ax = axis % nd
    for t in ts[1:]:
        if t.data.ndim != nd or any(
            t.shape[d] != ts[0].shape[d] for d in range(nd) if d != ax
        ):
            raise ShapeError(f"concat: incompatible shapes {ts[0].shape} and {t.shape}")
    sizes = [t.shape[ax] for t in ts]
    cuts = np.cumsum(sizes)[:-1]

    def back(g):
        for t, piece in zip(ts, np.split(g, cuts, axis=ax)):
            _push(t, piece)

    return make_node(np.concatenate([t.data for t in ts], axis=ax), ts, back, "concat")


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {x.shape} to {tuple(shape)}") from None

    def back(g):
        _push(x, g.reshape(x.shape))

    return make_node(out, (x,), back, "reshape")


def reduce_sum(x, axis=None) -> Tensor:
    x = as_tensor(x)
    out = np.sum(x.data, axis=axis)

    def back(g):
        gg = g if axis is None else np.expand_dims(g, axis)
        _push(x, np.broadcast_to(gg, x.shape))

    return make_node(out, (x,), back, "reduce_sum")


def reduce_mean(x, axis=None) -> Tensor:
    x = as_tensor(x)
    out = np.mean(x.data, axis=axis)
    count = x.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])

    def back(g):
        gg = g if axis is None else np.expand_dims(g, axis)
        _push(x, np.broadcast_to(gg, x.shape) / count)

    return make_node(out, (x,), back, "reduce_mean")


def bias_add(x, bias) -> Tensor:
    """Add a ``[m]`` bias along the last axis of ``x``."""
    x, bias = as_tensor(x), as_tensor(bias)
    if bias.data.ndim != 1 or x.shape[-1] != bias.shape[0]:
        raise ShapeError(f"bias_add: incompatible shapes {x.shape} and {bias.shape}")

    def back(g):
        _push(x, g)
        if bias.requires_grad:
            bias.accumulate(g.reshape(-1, bias.shape[0]).sum(axis=0))

    return make_node(x.data + bias.data, (x, bias), back, "bias_add")
