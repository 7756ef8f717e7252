"""Reverse-mode automatic differentiation over dense float64 arrays.

Forward values are computed eagerly when an operation is applied; the
backward pass walks the graph in reverse topological order.  Every node is
owned by whoever built it, there is no module-level state.

>>> x = Node(np.array([1.0, 2.0, 3.0]))
>>> loss = (x * x).sum()
>>> backward(loss)
>>> x.grad
array([2., 4., 6.])
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

LEAKY_SLOPE = 0.2


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible for an operation."""

    def __init__(self, kind: str, *shapes):
        self.kind = kind
        self.shapes = shapes
        desc = ", ".join(str(tuple(s)) for s in shapes)
        super().__init__(f"{kind}: incompatible shapes {desc}")


class DomainError(ValueError):
    """Raised when an operand lies outside an operation's domain."""


class Node:
    """A value in the computation graph.

    Leaves are created directly; interior nodes come from :func:`apply`
    (or the operator overloads, which call it).
    """

    __slots__ = ("data", "_grad", "op", "parents", "requires_grad", "_backward")

    def __init__(self, data, requires_grad: bool = True):
        self.data = np.array(data, dtype=np.float64)
        self._grad = None
        self.op = "leaf"
        self.parents: tuple[Node, ...] = ()
        self.requires_grad = requires_grad
        self._backward: Callable | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def grad(self) -> np.ndarray:
        if self._grad is None:
            self._grad = np.zeros_like(self.data)
        return self._grad

    @grad.setter
    def grad(self, value) -> None:
        self._grad = value

    def detach(self) -> "Node":
        return Node(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self._grad = None

    def __repr__(self) -> str:
        return f"Node(op={self.op}, shape={self.shape})"

    # operator sugar
    def __add__(self, other):
        return apply("add", self, other)

    def __radd__(self, other):
        return apply("add", other, self)

    def __sub__(self, other):
        return apply("sub", self, other)

    def __rsub__(self, other):
        return apply("sub", other, self)

    def __mul__(self, other):
        return apply("mul", self, other)

    def __rmul__(self, other):
        return apply("mul", other, self)

    def __truediv__(self, other):
        return apply("div", self, other)

    def __rtruediv__(self, other):
        return apply("div", other, self)

    def __neg__(self):
        return apply("mul", self, -1.0)

    def __pow__(self, p: float):
        return apply("pow", self, p=p)

    def __matmul__(self, other):
        return apply("matmul", self, other)

    def __getitem__(self, idx):
        return apply("slice", self, idx=idx)

    def sum(self, axis=None, keepdims: bool = False):
        return apply("sum", self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return apply("mean", self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return apply("reshape", self, shape=shape)

    def transpose(self, *axes):
        return apply("transpose", self, axes=axes or None)

    @property
    def T(self):
        return apply("transpose", self)


def as_node(x) -> Node:
    return x if isinstance(x, Node) else Node(x, requires_grad=False)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _broadcast_shape(kind: str, a: Node, b: Node) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(kind, a.shape, b.shape) from None


# Each forward rule returns (value, backward) where backward maps the output
# gradient to a tuple with one entry per input.
_RULES: dict[str, Callable] = {}


def _rule(kind: str):
    def register(fn):
        _RULES[kind] = fn
        return fn

    return register


@_rule("add")
def _add(a, b):
    _broadcast_shape("add", a, b)
    return a.data + b.data, lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape))


@_rule("sub")
def _sub(a, b):
    _broadcast_shape("sub", a, b)
    return a.data - b.data, lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape))


@_rule("mul")
def _mul(a, b):
    _broadcast_shape("mul", a, b)
    return a.data * b.data, lambda g: (
        _unbroadcast(g * b.data, a.shape),
        _unbroadcast(g * a.data, b.shape),
    )


@_rule("div")
def _div(a, b):
    _broadcast_shape("div", a, b)
    if np.any(b.data == 0.0):
        raise DomainError("div: zero divisor")
    out = a.data / b.data
    return out, lambda g: (
        _unbroadcast(g / b.data, a.shape),
        _unbroadcast(-g * out / b.data, b.shape),
    )


@_rule("matmul")
def _matmul(a, b):
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)
    return a.data @ b.data, lambda g: (g @ b.data.T, a.data.T @ g)


@_rule("dot")
def _dot(a, b):
    if a.ndim != 1 or a.shape != b.shape:
        raise ShapeError("dot", a.shape, b.shape)
    return np.dot(a.data, b.data), lambda g: (g * b.data, g * a.data)


def _conv_out_len(n: int, k: int, stride: int, pad: int) -> int:
    return (n + 2 * pad - k) // stride + 1


@_rule("conv1d")
def _conv1d(x, w, stride: int = 1, pad: int = 0):
    """x: (B, Cin, L), w: (Cout, Cin, K) -> (B, Cout, Lout)."""
    if x.ndim != 3 or w.ndim != 3 or x.shape[1] != w.shape[1]:
        raise ShapeError("conv1d", x.shape, w.shape)
    B, cin, L = x.shape
    cout, _, K = w.shape
    lout = _conv_out_len(L, K, stride, pad)
    if lout < 1:
        raise ShapeError("conv1d", x.shape, w.shape)
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad))) if pad else x.data
    # (B, Cin, Lout, K)
    cols = sliding_window_view(xp, K, axis=2)[:, :, ::stride][:, :, :lout]
    out = np.tensordot(cols, w.data, axes=([1, 3], [1, 2])).transpose(0, 2, 1)

    def back(g):
        gw = np.tensordot(g, cols, axes=([0, 2], [0, 2]))
        # (B, Lout, Cin, K)
        gcols = np.tensordot(g, w.data, axes=([1], [0])).transpose(0, 2, 1, 3)
        gxp = np.zeros_like(xp)
        span = stride * (lout - 1) + 1
        for k in range(K):
            gxp[:, :, k : k + span : stride] += gcols[:, :, :, k]
        gx = gxp[:, :, pad : pad + L] if pad else gxp
        return gx, gw

    return out, back


@_rule("conv_transpose1d")
def _conv_transpose1d(x, w, stride: int = 1, pad: int = 0):
    """x: (B, Cin, L), w: (Cin, Cout, K) -> (B, Cout, (L-1)*stride - 2*pad + K)."""
    if x.ndim != 3 or w.ndim != 3 or x.shape[1] != w.shape[0]:
        raise ShapeError("conv_transpose1d", x.shape, w.shape)
    B, cin, L = x.shape
    _, cout, K = w.shape
    full_len = (L - 1) * stride + K
    lout = full_len - 2 * pad
    if lout < 1:
        raise ShapeError("conv_transpose1d", x.shape, w.shape)
    # (B, Cout, L, K)
    contrib = np.tensordot(x.data, w.data, axes=([1], [0])).transpose(0, 2, 1, 3)
    full = np.zeros((B, cout, full_len))
    span = stride * (L - 1) + 1
    for k in range(K):
        full[:, :, k : k + span : stride] += contrib[:, :, :, k]
    out = full[:, :, pad : pad + lout]

    def back(g):
        gfull = np.zeros((B, cout, full_len))
        gfull[:, :, pad : pad + lout] = g
        gcontrib = np.stack(
            [gfull[:, :, k : k + span : stride] for k in range(K)], axis=-1
        )
        gx = np.tensordot(gcontrib, w.data, axes=([1, 3], [1, 2])).transpose(0, 2, 1)
        gw = np.tensordot(x.data, gcontrib, axes=([0, 2], [0, 2]))
        return gx, gw

    return out, back


@_rule("leaky_relu")
def _leaky_relu(x):
    slope = np.where(x.data > 0, 1.0, LEAKY_SLOPE)
    return x.data * slope, lambda g: (g * slope,)


@_rule("tanh")
def _tanh(x):
    out = np.tanh(x.data)
    return out, lambda g: (g * (1.0 - out * out),)


def _sigmoid_np(z):
    # split branches keep exp() from overflowing
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@_rule("sigmoid")
def _sigmoid(x):
    out = _sigmoid_np(np.atleast_1d(x.data)).reshape(x.shape)
    return out, lambda g: (g * out * (1.0 - out),)


@_rule("exp")
def _exp(x):
    out = np.exp(x.data)
    return out, lambda g: (g * out,)


@_rule("log")
def _log(x):
    if np.any(x.data <= 0.0):
        raise DomainError("log: operand must be strictly positive")
    return np.log(x.data), lambda g: (g / x.data,)


@_rule("abs")
def _abs(x):
    return np.abs(x.data), lambda g: (g * np.sign(x.data),)


@_rule("pow")
def _pow(x, p: float):
    if p != int(p) and np.any(x.data < 0.0):
        raise DomainError("pow: negative base with non-integer exponent")
    if p < 0 and np.any(x.data == 0.0):
        raise DomainError("pow: zero base with negative exponent")
    out = x.data**p
    return out, lambda g: (g * p * x.data ** (p - 1),)


@_rule("sum")
def _sum(x, axis=None, keepdims: bool = False):
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return out, back


@_rule("mean")
def _mean(x, axis=None, keepdims: bool = False):
    out = x.data.mean(axis=axis, keepdims=keepdims)
    count = x.data.size // max(out.size, 1)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, x.shape).copy(),)

    return out, back


def _concat_rule(*xs, axis: int = 0):
    try:
        out = np.concatenate([x.data for x in xs], axis=axis)
    except ValueError:
        raise ShapeError("concat", *(x.shape for x in xs)) from None
    bounds = np.cumsum([x.shape[axis] for x in xs])[:-1]
    return out, lambda g: tuple(np.split(g, bounds, axis=axis))


_RULES["concat"] = _concat_rule


@_rule("slice")
def _slice(x, idx):
    try:
        out = x.data[idx]
    except IndexError:
        raise ShapeError("slice", x.shape) from None

    def back(g):
        gx = np.zeros_like(x.data)
        gx[idx] += g
        return (gx,)

    return np.array(out), back


@_rule("reshape")
def _reshape(x, shape):
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", x.shape, shape) from None
    return out, lambda g: (g.reshape(x.shape),)


@_rule("transpose")
def _transpose(x, axes=None):
    out = np.transpose(x.data, axes)
    inv = None if axes is None else np.argsort(axes)
    return out, lambda g: (np.transpose(g, inv),)


KINDS = tuple(sorted(_RULES))


def apply(kind: str, *inputs, **attrs) -> Node:
    """Evaluate ``kind`` on ``inputs`` and return the resulting node."""
    try:
        rule = _RULES[kind]
    except KeyError:
        raise ValueError(f"unknown operation kind {kind!r}") from None
    parents = tuple(as_node(x) for x in inputs)
    value, back = rule(*parents, **attrs)
    out = Node.__new__(Node)
    out.data = np.asarray(value, dtype=np.float64)
    out._grad = None
    out.op = kind
    out.parents = parents
    out.requires_grad = any(p.requires_grad for p in parents)
    out._backward = back if out.requires_grad else None
    return out


# thin functional aliases used by the nets and losses
def concat(xs: Sequence[Node], axis: int = 0) -> Node:
    return apply("concat", *xs, axis=axis)


def conv1d(x, w, stride: int = 1, pad: int = 0) -> Node:
    return apply("conv1d", x, w, stride=stride, pad=pad)


def conv_transpose1d(x, w, stride: int = 1, pad: int = 0) -> Node:
    return apply("conv_transpose1d", x, w, stride=stride, pad=pad)


def leaky_relu(x) -> Node:
    return apply("leaky_relu", x)


def tanh(x) -> Node:
    return apply("tanh", x)


def sigmoid(x) -> Node:
    return apply("sigmoid", x)


def exp(x) -> Node:
    return apply("exp", x)


def log(x) -> Node:
    return apply("log", x)


def absolute(x) -> Node:
    return apply("abs", x)


def dot(a, b) -> Node:
    return apply("dot", a, b)


@dataclass
class Tape:
    """Nodes of one graph in topological order (inputs before consumers)."""

    nodes: list[Node] = field(default_factory=list)

    @classmethod
    def record(cls, root: Node) -> "Tape":
        order: list[Node] = []
        seen: set[int] = set()
        stack: list[tuple[Node, bool]] = [(root, False)]
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
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        return cls(order)


def backward(loss: Node) -> Tape:
    """Accumulate d(loss)/d(leaf) into every leaf's ``grad``.

    Interior gradients are recomputed from scratch on each call; leaf
    gradients accumulate until :meth:`Node.zero_grad` is called.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    tape = Tape.record(loss)
    if not loss.requires_grad:
        return tape
    pending: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        g = pending.pop(id(node), None)
        if node._backward is None:
            if g is not None:
                node.grad = node.grad + g
            continue
        node.grad = np.zeros_like(node.data) if g is None else g
        if g is None:
            continue
        for parent, pg in zip(node.parents, node._backward(g)):
            if parent.requires_grad:
                key = id(parent)
                prev = pending.get(key)
                pending[key] = pg if prev is None else prev + pg
    return tape


def grad_check(f: Callable[[Node], Node], point, h: float = 1e-5) -> float:
    """Max relative error between the analytic gradient and central differences.

    ``f`` builds a scalar graph from a single leaf.  The error per coordinate is
    ``|analytic - numeric| / (|analytic| + 1e-8)``.
    """
    x0 = np.array(point, dtype=np.float64)
    leaf = Node(x0.copy())
    backward(f(leaf))
    analytic = leaf.grad.copy()

    numeric = np.empty_like(x0)
    flat = numeric.reshape(-1)
    for i in range(x0.size):
        xp = x0.copy().reshape(-1)
        xm = x0.copy().reshape(-1)
        xp[i] += h
        xm[i] -= h
        fp = float(f(Node(xp.reshape(x0.shape), requires_grad=False)).data)
        fm = float(f(Node(xm.reshape(x0.shape), requires_grad=False)).data)
        flat[i] = (fp - fm) / (2.0 * h)
    err = np.abs(analytic - numeric) / (np.abs(analytic) + 1e-8)
    return float(err.max()) if err.size else 0.0
