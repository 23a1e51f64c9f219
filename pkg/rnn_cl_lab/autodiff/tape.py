"""Reverse-mode automatic differentiation over numpy arrays.

A graph is built dynamically while the forward computation runs: every
operation returns a new :class:`Node` that remembers its parents and a
closure mapping the output gradient to the parents' gradients.
:func:`backward` walks the graph once in reverse topological order.

All values are float64. Graphs are cheap and rebuilt for every minibatch.
"""

from __future__ import annotations

from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from ..errors import GraphError, ShapeError

BackwardFn = Callable[[np.ndarray], Sequence[np.ndarray | None]]


class Node:
    """A value in the computation graph."""

    __slots__ = ("value", "grad", "op", "parents", "backward_fn", "name")

    def __init__(
        self,
        value,
        parents: Sequence["Node"] = (),
        op: str = "leaf",
        backward_fn: BackwardFn | None = None,
        name: str | None = None,
    ):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.op = op
        self.parents = tuple(parents)
        self.backward_fn = backward_fn
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def is_leaf(self) -> bool:
        return not self.parents

    @property
    def T(self) -> "Node":
        return transpose(self)

    def item(self) -> float:
        return float(self.value)

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Node<{self.op}{label} shape={self.shape}>"

    def __add__(self, other) -> "Node":
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other) -> "Node":
        return sub(self, other)

    def __rsub__(self, other) -> "Node":
        return sub(other, self)

    def __mul__(self, other) -> "Node":
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other: float) -> "Node":
        return scale(self, 1.0 / float(other))

    def __neg__(self) -> "Node":
        return scale(self, -1.0)

    def __matmul__(self, other) -> "Node":
        return matmul(self, other)


def leaf(value, name: str | None = None) -> Node:
    return Node(np.array(value, dtype=np.float64, copy=True), name=name)


def constant(value) -> Node:
    if isinstance(value, Node):
        return value
    return Node(value, op="const")


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def sigmoid_array(x: np.ndarray) -> np.ndarray:
    # tanh form is stable for large |x|
    return 0.5 * (1.0 + np.tanh(0.5 * x))


# ----------------------------------------------------------------------
# elementwise arithmetic
# ----------------------------------------------------------------------
def add(a, b) -> Node:
    a, b = constant(a), constant(b)
    return Node(
        a.value + b.value,
        (a, b),
        "add",
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Node:
    a, b = constant(a), constant(b)
    return Node(
        a.value - b.value,
        (a, b),
        "sub",
        lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)),
    )


def mul(a, b) -> Node:
    a, b = constant(a), constant(b)
    return Node(
        a.value * b.value,
        (a, b),
        "mul",
        lambda g: (_unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)),
    )


def scale(a: Node, factor: float) -> Node:
    return Node(a.value * factor, (a,), "scale", lambda g: (g * factor,))


def square(a: Node) -> Node:
    return Node(a.value**2, (a,), "square", lambda g: (2.0 * a.value * g,))


def exp(a: Node) -> Node:
    out = np.exp(a.value)
    return Node(out, (a,), "exp", lambda g: (g * out,))


def log(a: Node) -> Node:
    return Node(np.log(a.value), (a,), "log", lambda g: (g / a.value,))


def tanh(a: Node) -> Node:
    out = np.tanh(a.value)
    return Node(out, (a,), "tanh", lambda g: (g * (1.0 - out**2),))


def sigmoid(a: Node) -> Node:
    out = sigmoid_array(a.value)
    return Node(out, (a,), "sigmoid", lambda g: (g * out * (1.0 - out),))


def softplus(a: Node) -> Node:
    return Node(
        np.logaddexp(0.0, a.value),
        (a,),
        "softplus",
        lambda g: (g * sigmoid_array(a.value),),
    )


def identity(a: Node) -> Node:
    return a


# ----------------------------------------------------------------------
# linear algebra and reductions
# ----------------------------------------------------------------------
def matmul(a, b) -> Node:
    a, b = constant(a), constant(b)
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return Node(
        a.value @ b.value,
        (a, b),
        "matmul",
        lambda g: (g @ b.value.T, a.value.T @ g),
    )


def transpose(a: Node) -> Node:
    return Node(a.value.T, (a,), "transpose", lambda g: (g.T,))


def reshape(a: Node, shape: tuple[int, ...]) -> Node:
    return Node(a.value.reshape(shape), (a,), "reshape", lambda g: (g.reshape(a.shape),))


def sum(a: Node, axis: int | None = None, keepdims: bool = False) -> Node:  # noqa: A001
    def backward_fn(g: np.ndarray):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return Node(a.value.sum(axis=axis, keepdims=keepdims), (a,), "sum", backward_fn)


def mean(a: Node, axis: int | None = None) -> Node:
    count = a.value.size if axis is None else a.shape[axis]
    return scale(sum(a, axis=axis), 1.0 / count)


def total(nodes: Iterable[Node]) -> Node:
    """Sum a collection of scalar nodes (zero when empty)."""
    result: Node | None = None
    for node in nodes:
        result = node if result is None else add(result, node)
    return result if result is not None else constant(0.0)


# ----------------------------------------------------------------------
# indexing and assembly
# ----------------------------------------------------------------------
def view(a: Node, offset: int, shape: tuple[int, ...]) -> Node:
    """Contiguous slice of a flat vector, reshaped."""
    size = int(np.prod(shape, dtype=np.int64))
    flat = a.value.reshape(-1)

    def backward_fn(g: np.ndarray):
        out = np.zeros(flat.shape)
        out[offset : offset + size] = g.reshape(-1)
        return (out.reshape(a.shape),)

    return Node(flat[offset : offset + size].reshape(shape), (a,), "view", backward_fn)


def take(a: Node, index: np.ndarray) -> Node:
    """Gather entries of a flat vector."""
    index = np.asarray(index, dtype=np.int64)

    def backward_fn(g: np.ndarray):
        out = np.zeros(a.value.size)
        np.add.at(out, index, g)
        return (out.reshape(a.shape),)

    return Node(a.value.reshape(-1)[index], (a,), "take", backward_fn)


def columns(a: Node, start: int, stop: int) -> Node:
    """Slice of the last axis."""

    def backward_fn(g: np.ndarray):
        out = np.zeros(a.shape)
        out[..., start:stop] = g
        return (out,)

    return Node(a.value[..., start:stop], (a,), "columns", backward_fn)


def rows(a: Node, index: np.ndarray) -> Node:
    """Select entries along the first axis."""
    index = np.asarray(index, dtype=np.int64)

    def backward_fn(g: np.ndarray):
        out = np.zeros(a.shape)
        np.add.at(out, index, g)
        return (out,)

    return Node(a.value[index], (a,), "rows", backward_fn)


def concat(nodes: Sequence[Node], axis: int = -1) -> Node:
    nodes = [constant(n) for n in nodes]
    sizes = [n.shape[axis] for n in nodes]
    bounds = np.cumsum([0, *sizes])

    def backward_fn(g: np.ndarray):
        return tuple(
            np.take(g, np.arange(bounds[k], bounds[k + 1]), axis=axis) for k in range(len(nodes))
        )

    return Node(np.concatenate([n.value for n in nodes], axis=axis), nodes, "concat", backward_fn)


def stack(nodes: Sequence[Node], axis: int = 0) -> Node:
    nodes = [constant(n) for n in nodes]

    def backward_fn(g: np.ndarray):
        return tuple(np.take(g, k, axis=axis) for k in range(len(nodes)))

    return Node(np.stack([n.value for n in nodes], axis=axis), nodes, "stack", backward_fn)


# ----------------------------------------------------------------------
# fused losses
# ----------------------------------------------------------------------
def bce_with_logits(logits: Node, target, weight=1.0) -> Node:
    """Elementwise ``weight * BCE(target, sigmoid(logits))`` in log-sigmoid form."""
    target = np.asarray(target, dtype=np.float64)
    weight = np.broadcast_to(np.asarray(weight, dtype=np.float64), logits.shape)
    z = logits.value
    out = weight * (np.logaddexp(0.0, z) - target * z)
    return Node(
        out,
        (logits,),
        "bce",
        lambda g: (g * weight * (sigmoid_array(z) - target),),
    )


def log_softmax(a: Node, axis: int = -1) -> Node:
    shifted = a.value - a.value.max(axis=axis, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    probs = np.exp(out)
    return Node(
        out,
        (a,),
        "log_softmax",
        lambda g: (g - probs * g.sum(axis=axis, keepdims=True),),
    )


# ----------------------------------------------------------------------
# backward pass
# ----------------------------------------------------------------------
def topological_order(root: Node) -> list[Node]:
    """Parents before children; raises on cycles."""
    order: list[Node] = []
    state: dict[int, int] = {}  # 1 = on stack, 2 = done
    stack_: list[tuple[Node, int]] = [(root, 0)]
    while stack_:
        node, child = stack_.pop()
        if child == 0:
            mark = state.get(id(node))
            if mark == 2:
                continue
            if mark == 1:
                raise GraphError(f"cycle through {node!r}")
            state[id(node)] = 1
        if child < len(node.parents):
            stack_.append((node, child + 1))
            parent = node.parents[child]
            mark = state.get(id(parent))
            if mark == 1:
                raise GraphError(f"cycle through {parent!r}")
            if mark is None:
                stack_.append((parent, 0))
        else:
            state[id(node)] = 2
            order.append(node)
    return order


def backward(loss: Node, wrt: Mapping[str, Node] | None = None) -> dict[str, np.ndarray]:
    """Gradients of a scalar ``loss``.

    With ``wrt`` the result is keyed by the given names and unreachable
    leaves get zero gradients; otherwise every named leaf reached from
    ``loss`` is reported.
    """
    if loss.value.size != 1:
        raise GraphError(f"loss must be scalar, got shape {loss.shape}")
    order = topological_order(loss)
    for node in order:
        node.grad = np.zeros_like(node.value)
    loss.grad = np.ones_like(loss.value)
    for node in reversed(order):
        if node.backward_fn is None:
            continue
        for parent, g in zip(node.parents, node.backward_fn(node.grad)):
            if g is not None:
                parent.grad += g

    if wrt is None:
        return {n.name: n.grad for n in order if n.is_leaf and n.name}
    reached = {id(n) for n in order}
    grads: dict[str, np.ndarray] = {}
    for name, node in wrt.items():
        if id(node) not in reached:
            node.grad = np.zeros_like(node.value)
        grads[name] = node.grad
    return grads
