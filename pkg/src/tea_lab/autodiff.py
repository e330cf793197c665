"""Define-by-run reverse-mode differentiation over dense float64 arrays.

Values are plain ``numpy`` arrays of dtype float64. Every operation checks
shapes explicitly; nothing is broadcast. Batches are laid out with one column
per instance (``dim x batch``), so row concatenation and row slicing are the
structural operations needed to assemble and split feature blocks.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class NonFiniteError(ValueError):
    """Raised when raw data passed to :func:`tensor` contains NaN or Inf."""


def tensor(data, shape: Sequence[int] | None = None) -> np.ndarray:
    """Build a validated float64 array from raw data.

    A copy is always made. ``shape`` (if given) must have the same number of
    elements as ``data``.
    """
    arr = np.array(data, dtype=np.float64)
    if shape is not None:
        shape = tuple(int(s) for s in shape)
        if any(s <= 0 for s in shape):
            raise ShapeError(f"extents must be positive, got {shape}")
        if int(np.prod(shape)) != arr.size:
            raise ShapeError(f"cannot view {arr.size} values as shape {shape}")
        arr = arr.reshape(shape)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError("tensor data contains NaN or Inf")
    return arr


class Node:
    """A value in the computation graph.

    Leaves created with ``requires_grad=True`` are parameters; their ``grad``
    accumulates across calls to :func:`backward` until :meth:`zero_grad`.
    """

    __slots__ = ("value", "grad", "op", "parents", "requires_grad", "_backward", "name")

    def __init__(
        self,
        value: np.ndarray,
        parents: tuple["Node", ...] = (),
        op: str = "leaf",
        backward_fn: Callable[[np.ndarray], tuple] | None = None,
        requires_grad: bool | None = None,
        name: str | None = None,
    ):
        self.value = value
        self.parents = parents
        self.op = op
        self._backward = backward_fn
        if requires_grad is None:
            requires_grad = any(p.requires_grad for p in parents)
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(value) if requires_grad else None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def zero_grad(self) -> None:
        if self.requires_grad:
            self.grad = np.zeros_like(self.value)

    def __repr__(self) -> str:
        label = self.name or self.op
        return f"Node({label}, shape={self.shape})"

    def __add__(self, other: "Node") -> "Node":
        return add(self, other)

    def __sub__(self, other: "Node") -> "Node":
        return sub(self, other)

    def __mul__(self, other: "Node") -> "Node":
        return mul(self, other)

    def __matmul__(self, other: "Node") -> "Node":
        return matmul(self, other)


def param(data, name: str | None = None) -> Node:
    return Node(tensor(data), requires_grad=True, name=name)


def const(data) -> Node:
    return Node(np.asarray(data, dtype=np.float64), requires_grad=False)


def _same_shape(a: Node, b: Node, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def matmul(a: Node, b: Node) -> Node:
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    av, bv = a.value, b.value

    def backward(g):
        return g @ bv.T, av.T @ g

    return Node(av @ bv, (a, b), "matmul", backward)


def add(a: Node, b: Node) -> Node:
    _same_shape(a, b, "add")
    return Node(a.value + b.value, (a, b), "add", lambda g: (g, g))


def sub(a: Node, b: Node) -> Node:
    _same_shape(a, b, "sub")
    return Node(a.value - b.value, (a, b), "sub", lambda g: (g, -g))


def mul(a: Node, b: Node) -> Node:
    """Hadamard product."""
    _same_shape(a, b, "hadamard")
    av, bv = a.value, b.value
    return Node(av * bv, (a, b), "hadamard", lambda g: (g * bv, g * av))


def scale(a: Node, c: float) -> Node:
    c = float(c)
    return Node(a.value * c, (a,), "scale", lambda g: (g * c,))


def _sigmoid(v: np.ndarray) -> np.ndarray:
    # tanh form avoids overflow in exp for large |v|
    return 0.5 * (1.0 + np.tanh(0.5 * v))


def sigmoid(a: Node) -> Node:
    s = _sigmoid(a.value)
    return Node(s, (a,), "sigmoid", lambda g: (g * s * (1.0 - s),))


def tanh(a: Node) -> Node:
    t = np.tanh(a.value)
    return Node(t, (a,), "tanh", lambda g: (g * (1.0 - t * t),))


def log(a: Node) -> Node:
    av = a.value
    if np.any(av <= 0):
        raise ValueError("log: non-positive argument")
    return Node(np.log(av), (a,), "log", lambda g: (g / av,))


def clip(a: Node, lo: float, hi: float) -> Node:
    """Clamp to ``[lo, hi]``; the derivative is zero where clamping is active."""
    av = a.value
    inside = (av >= lo) & (av <= hi)
    return Node(np.clip(av, lo, hi), (a,), "clip", lambda g: (g * inside,))


def sum(a: Node) -> Node:  # noqa: A001 - mirrors the numpy name
    shape = a.shape
    return Node(np.array(a.value.sum()), (a,), "sum", lambda g: (np.full(shape, float(g)),))


def mean(a: Node) -> Node:
    shape, n = a.shape, a.value.size
    return Node(np.array(a.value.mean()), (a,), "mean", lambda g: (np.full(shape, float(g) / n),))


def transpose(a: Node) -> Node:
    if a.value.ndim != 2:
        raise ShapeError(f"transpose expects a matrix, got {a.shape}")
    return Node(a.value.T.copy(), (a,), "transpose", lambda g: (g.T,))


def reshape(a: Node, shape: Sequence[int]) -> Node:
    shape = tuple(shape)
    if int(np.prod(shape)) != a.value.size:
        raise ShapeError(f"reshape: cannot view {a.shape} as {shape}")
    old = a.shape
    return Node(a.value.reshape(shape), (a,), "reshape", lambda g: (g.reshape(old),))


def concat_rows(nodes: Sequence[Node]) -> Node:
    nodes = tuple(nodes)
    if not nodes:
        raise ShapeError("concat_rows: no operands")
    ncols = nodes[0].shape[1:]
    for n in nodes:
        if n.value.ndim != 2 or n.shape[1:] != ncols:
            raise ShapeError(
                f"concat_rows: incompatible shapes {[m.shape for m in nodes]}"
            )
    bounds = np.cumsum([0] + [n.shape[0] for n in nodes])

    def backward(g):
        return tuple(g[bounds[i]:bounds[i + 1]] for i in range(len(nodes)))

    return Node(np.concatenate([n.value for n in nodes], axis=0), nodes, "concat_rows", backward)


def slice_rows(a: Node, start: int, stop: int) -> Node:
    rows = a.shape[0]
    if not (0 <= start < stop <= rows):
        raise IndexError(f"slice_rows: [{start}, {stop}) out of range for {rows} rows")
    shape = a.shape

    def backward(g):
        out = np.zeros(shape)
        out[start:stop] = g
        return (out,)

    return Node(a.value[start:stop], (a,), "slice_rows", backward)


def _topological(root: Node) -> list[Node]:
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
    return order


def backward(root: Node) -> None:
    """Accumulate d(root)/d(leaf) into every reachable leaf's ``grad``.

    Interior adjoints are recomputed from scratch on every call, so calling
    twice without zeroing doubles leaf gradients and nothing else.
    """
    if root.value.size != 1 or root.value.ndim > 1:
        raise ShapeError(f"backward: root must be scalar, got shape {root.shape}")
    if not root.requires_grad:
        return
    order = _topological(root)
    adjoint: dict[int, np.ndarray] = {id(root): np.ones_like(root.value)}
    for node in reversed(order):
        g = adjoint.pop(id(node), None)
        if g is None:
            continue
        if not node.parents:
            node.grad = node.grad + g
            continue
        for p, gp in zip(node.parents, node._backward(g)):
            if not p.requires_grad:
                continue
            if id(p) in adjoint:
                adjoint[id(p)] = adjoint[id(p)] + gp
            else:
                adjoint[id(p)] = gp


def zero_gradients(nodes: Iterable[Node]) -> None:
    for n in nodes:
        n.zero_grad()


def finite_difference_gradient(
    f: Callable[[np.ndarray], float], at: np.ndarray, step: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient of a scalar function, one coordinate at a time."""
    if step <= 0:
        raise ValueError("step must be positive")
    x = np.array(at, dtype=np.float64)
    grad = np.zeros_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = float(f(x))
        flat[i] = orig - step
        fm = float(f(x))
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * step)
    return grad
