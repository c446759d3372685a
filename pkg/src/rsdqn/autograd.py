"""Small reverse-mode autodiff over numpy arrays.

Only the operations the agents actually need are provided: affine maps,
ReLU, elementwise arithmetic with broadcasting, reductions, absolute value,
row gathers, and fused softmax cross-entropy. Every value is float64.
"""

from __future__ import annotations

from contextlib import contextmanager
from typing import Callable

import numpy as np

from .errors import DimensionError, StateError


class Tensor:
    """A float64 array that optionally records how it was computed.

    Leaf tensors with ``requires_grad=True`` accumulate gradients into
    ``grad``. Non-leaf tensors keep references to their parents and a
    closure that pushes the upstream gradient back to them.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        if self.grad is not None and self.grad.shape == self.data.shape:
            self.grad.fill(0.0)
        else:
            self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

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
        return mul(self, -1.0)

    def backward(self) -> None:
        """Back-propagate from this scalar through the recorded graph."""
        if self._backward is None:
            raise StateError("backward() called on a tensor with no recorded forward pass")
        if self.data.size != 1:
            raise DimensionError(f"backward() needs a scalar, got shape {self.shape}")

        order = _topological_order(self)
        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in order:
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.grad is None:
                    node.grad = np.zeros_like(node.data)
                node.grad += g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                if id(parent) in grads:
                    grads[id(parent)] = grads[id(parent)] + pg
                else:
                    grads[id(parent)] = pg


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
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
    order.reverse()
    return order


_grad_enabled = True


@contextmanager
def no_grad():
    """Evaluate without recording a graph (inference only)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _make(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def absolute(a: Tensor) -> Tensor:
    sign = np.sign(a.data)
    return _make(np.abs(a.data), (a,), lambda g: (g * sign,))


def square(a: Tensor) -> Tensor:
    return _make(a.data * a.data, (a,), lambda g: (2.0 * a.data * g,))


def total(a: Tensor) -> Tensor:
    """Sum of all elements."""
    return _make(np.asarray(a.data.sum()), (a,), lambda g: (np.broadcast_to(g, a.shape).copy(),))


def mean(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    if axis is None:
        n = a.data.size
        return _make(
            np.asarray(a.data.mean()),
            (a,),
            lambda g: (np.full(a.shape, float(g) / n),),
        )
    n = a.shape[axis]
    out = a.data.mean(axis=axis, keepdims=keepdims)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / n, a.shape).copy(),)

    return _make(out, (a,), backward)


def affine(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """``x @ weight.T + bias`` for a single vector or a batch of row vectors."""
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    if weight.data.ndim != 2 or x.shape[-1] != weight.shape[1]:
        raise DimensionError(
            f"input of width {x.shape[-1] if x.data.ndim else 0} does not match weight {weight.shape}"
        )
    if bias.shape != (weight.shape[0],):
        raise DimensionError(f"bias shape {bias.shape} does not match weight {weight.shape}")
    out = x.data @ weight.data.T + bias.data

    def backward(g):
        gx = g @ weight.data if x.requires_grad else None
        if x.data.ndim == 1:
            gw = np.outer(g, x.data) if weight.requires_grad else None
            gb = g
        else:
            gw = g.T @ x.data if weight.requires_grad else None
            gb = g.sum(axis=0)
        return gx, gw, gb

    return _make(out, (x, weight, bias), backward)


def gather(a: Tensor, index: np.ndarray) -> Tensor:
    """Pick ``a[i, index[i]]`` for each row of a 2-D tensor."""
    index = np.asarray(index, dtype=np.int64)
    rows = np.arange(a.shape[0])
    if index.shape != (a.shape[0],):
        raise DimensionError(f"index shape {index.shape} does not match rows {a.shape[0]}")

    def backward(g):
        out = np.zeros_like(a.data)
        out[rows, index] = g
        return (out,)

    return _make(a.data[rows, index], (a,), backward)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically stable softmax over the last axis (plain numpy)."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def cross_entropy(logits, target) -> Tensor:
    """Mean of ``-log softmax(logits)[target]``.

    ``logits`` is either a vector with an integer ``target`` or a batch of
    rows with one target per row; batches are averaged.
    """
    logits = as_tensor(logits)
    target = np.asarray(target, dtype=np.int64)
    n_actions = logits.shape[-1]
    if np.any(target < 0) or np.any(target >= n_actions):
        raise IndexError(f"target {target} out of range for {n_actions} classes")
    probs = softmax(logits.data)
    logp = log_softmax(logits.data)
    if logits.data.ndim == 1:
        if target.ndim != 0:
            raise DimensionError("a single logit vector needs a scalar target")
        value = -logp[target]

        def backward(g):
            d = probs.copy()
            d[target] -= 1.0
            return (g * d,)

    else:
        if target.shape != (logits.shape[0],):
            raise DimensionError(f"targets {target.shape} do not match batch {logits.shape[0]}")
        rows = np.arange(logits.shape[0])
        n = logits.shape[0]
        value = -logp[rows, target].mean()

        def backward(g):
            d = probs.copy()
            d[rows, target] -= 1.0
            return (d * (g / n),)

    return _make(np.asarray(value), (logits,), backward)


def mse(a, b) -> Tensor:
    """Mean over all elements of ``(a - b) ** 2``."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise DimensionError(f"mse of shapes {a.shape} and {b.shape}")
    return mean(square(sub(a, b)))
