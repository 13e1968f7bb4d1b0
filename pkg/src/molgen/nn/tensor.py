"""Reverse-mode automatic differentiation over numpy arrays.

A Tensor wraps a float64 ndarray and records its producing operation on a
dynamic tape; backward() walks the tape in reverse topological order. Only
the operations the models in this package need are implemented. Training
code enables finite-value checking so a NaN/Inf anywhere trips immediately.
"""

from __future__ import annotations

import contextlib
from typing import Callable

import numpy as np

CHECK_FINITE = False
_GRAD_ENABLED = True


class GraphNotBuilt(RuntimeError):
    pass


class ShapeMismatch(ValueError):
    pass


@contextlib.contextmanager
def no_grad():
    """Disable tape recording (inference paths)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


@contextlib.contextmanager
def finite_checks(enabled: bool = True):
    global CHECK_FINITE
    prev = CHECK_FINITE
    CHECK_FINITE = enabled
    try:
        yield
    finally:
        CHECK_FINITE = prev


def _as_array(value) -> np.ndarray:
    if isinstance(value, np.ndarray):
        return value.astype(np.float64, copy=False)
    return np.asarray(value, dtype=np.float64)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_array(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._backward: Callable[[np.ndarray], None] | None = None
        self._parents: tuple[Tensor, ...] = ()

    # -- construction helpers -------------------------------------------------

    @classmethod
    def _from_op(cls, data: np.ndarray, parents: tuple["Tensor", ...],
                 backward: Callable[[np.ndarray], None]) -> "Tensor":
        if CHECK_FINITE and not np.all(np.isfinite(data)):
            raise FloatingPointError("non-finite value produced by an operation")
        out = cls(data)
        if _GRAD_ENABLED and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward = backward
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(grad, dtype=np.float64)
        else:
            self.grad += grad

    # -- autograd driver ------------------------------------------------------

    def backward(self) -> None:
        if self.data.size != 1:
            raise ShapeMismatch("backward() requires a scalar loss")
        if not self.requires_grad:
            raise GraphNotBuilt("no graph recorded: tensor does not require grad")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- elementwise arithmetic ----------------------------------------------

    def __add__(self, other) -> "Tensor":
        other = other if isinstance(other, Tensor) else Tensor(other)
        data = self.data + other.data

        def backward(grad):
            if self.requires_grad:
                self._accumulate(_unbroadcast(grad, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(grad, other.data.shape))

        return Tensor._from_op(data, (self, other), backward)

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        def backward(grad):
            if self.requires_grad:
                self._accumulate(-grad)

        return Tensor._from_op(-self.data, (self,), backward)

    def __sub__(self, other) -> "Tensor":
        other = other if isinstance(other, Tensor) else Tensor(other)
        return self + (-other)

    def __rsub__(self, other) -> "Tensor":
        return Tensor(other) + (-self)

    def __mul__(self, other) -> "Tensor":
        other = other if isinstance(other, Tensor) else Tensor(other)
        data = self.data * other.data

        def backward(grad):
            if self.requires_grad:
                self._accumulate(_unbroadcast(grad * other.data, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(grad * self.data, other.data.shape))

        return Tensor._from_op(data, (self, other), backward)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            return self * other.reciprocal()
        return self * (1.0 / other)

    def reciprocal(self) -> "Tensor":
        data = 1.0 / self.data

        def backward(grad):
            if self.requires_grad:
                self._accumulate(-grad * data * data)

        return Tensor._from_op(data, (self,), backward)

    def __pow__(self, exponent: float) -> "Tensor":
        data = self.data ** exponent

        def backward(grad):
            if self.requires_grad:
                self._accumulate(grad * exponent * self.data ** (exponent - 1))

        return Tensor._from_op(data, (self,), backward)

    # -- matrix ops -----------------------------------------------------------

    def matmul(self, other: "Tensor") -> "Tensor":
        if self.data.shape[-1] != other.data.shape[0]:
            raise ShapeMismatch(
                f"matmul: {self.data.shape} @ {other.data.shape}"
            )
        data = self.data @ other.data

        def backward(grad):
            if self.requires_grad:
                self._accumulate(grad @ other.data.T)
            if other.requires_grad:
                other._accumulate(self.data.T @ grad)

        return Tensor._from_op(data, (self, other), backward)

    __matmul__ = matmul

    def transpose(self) -> "Tensor":
        def backward(grad):
            if self.requires_grad:
                self._accumulate(grad.T)

        return Tensor._from_op(self.data.T, (self,), backward)

    def reshape(self, *shape) -> "Tensor":
        old_shape = self.data.shape

        def backward(grad):
            if self.requires_grad:
                self._accumulate(grad.reshape(old_shape))

        return Tensor._from_op(self.data.reshape(*shape), (self,), backward)

    # -- nonlinearities ---------------------------------------------------------

    def exp(self) -> "Tensor":
        data = np.exp(self.data)

        def backward(grad):
            if self.requires_grad:
                self._accumulate(grad * data)

        return Tensor._from_op(data, (self,), backward)

    def log(self) -> "Tensor":
        def backward(grad):
            if self.requires_grad:
                self._accumulate(grad / self.data)

        return Tensor._from_op(np.log(self.data), (self,), backward)

    def tanh(self) -> "Tensor":
        data = np.tanh(self.data)

        def backward(grad):
            if self.requires_grad:
                self._accumulate(grad * (1.0 - data * data))

        return Tensor._from_op(data, (self,), backward)

    def sigmoid(self) -> "Tensor":
        data = _sigmoid(self.data)

        def backward(grad):
            if self.requires_grad:
                self._accumulate(grad * data * (1.0 - data))

        return Tensor._from_op(data, (self,), backward)

    def relu(self) -> "Tensor":
        mask = self.data > 0
        data = np.where(mask, self.data, 0.0)

        def backward(grad):
            if self.requires_grad:
                self._accumulate(grad * mask)

        return Tensor._from_op(data, (self,), backward)

    # -- reductions -------------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        data = self.data.sum(axis=axis, keepdims=keepdims)
        shape = self.data.shape

        def backward(grad):
            if not self.requires_grad:
                return
            g = grad
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            self._accumulate(np.broadcast_to(g, shape).copy())

        return Tensor._from_op(data, (self,), backward)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        if axis is None:
            count = self.data.size
        else:
            count = self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    # -- structural -------------------------------------------------------------

    def slice_cols(self, start: int, stop: int) -> "Tensor":
        def backward(grad):
            if self.requires_grad:
                if self.grad is None:
                    self.grad = np.zeros_like(self.data)
                self.grad[..., start:stop] += grad

        return Tensor._from_op(self.data[..., start:stop], (self,), backward)

    def slice_rows(self, start: int, stop: int) -> "Tensor":
        def backward(grad):
            if self.requires_grad:
                if self.grad is None:
                    self.grad = np.zeros_like(self.data)
                self.grad[start:stop] += grad

        return Tensor._from_op(self.data[start:stop], (self,), backward)

    def repeat_rows(self, times: int) -> "Tensor":
        """Tile the row block `times` times along axis 0 (time-major layout)."""
        rows = self.data.shape[0]

        def backward(grad):
            if self.requires_grad:
                self._accumulate(grad.reshape(times, rows, -1).sum(axis=0).reshape(self.data.shape))

        return Tensor._from_op(np.tile(self.data, (times, 1)), (self,), backward)

    def select_rows(self, indices: np.ndarray) -> "Tensor":
        """Gather rows (embedding lookup); scatter-add on backward."""
        indices = np.asarray(indices)
        shape = self.data.shape

        def backward(grad):
            if self.requires_grad:
                full = np.zeros(shape)
                np.add.at(full, indices, grad)
                self._accumulate(full)

        return Tensor._from_op(self.data[indices], (self,), backward)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # exp overflow for very negative x saturates to inf and divides to 0,
    # which is the correct limit; suppress the spurious warning.
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-x))


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcasted gradient back to the original shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def concat(tensors: list[Tensor], axis: int = -1) -> Tensor:
    datas = [t.data for t in tensors]
    data = np.concatenate(datas, axis=axis)
    sizes = [d.shape[axis] for d in datas]
    offsets = np.cumsum([0] + sizes)

    def backward(grad):
        moved = np.moveaxis(grad, axis, 0)
        for t, start, stop in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                t._accumulate(np.moveaxis(moved[start:stop], 0, axis))

    return Tensor._from_op(data, tuple(tensors), backward)


def stack_rows(tensors: list[Tensor]) -> Tensor:
    """Stack equal-shape 2-D tensors along a new leading axis."""
    data = np.stack([t.data for t in tensors])

    def backward(grad):
        for i, t in enumerate(tensors):
            if t.requires_grad:
                t._accumulate(grad[i])

    return Tensor._from_op(data, tuple(tensors), backward)


def softmax_cross_entropy(
    logits: Tensor, targets: np.ndarray, mask: np.ndarray | None = None
) -> tuple[Tensor, float]:
    """Summed token cross-entropy with optional 0/1 mask.

    Returns (loss_sum, count). logits: [N, V]; targets: int [N].
    """
    targets = np.asarray(targets)
    n = logits.data.shape[0]
    if mask is None:
        mask = np.ones(n)
    mask = np.asarray(mask, dtype=np.float64)
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_z
    picked = log_probs[np.arange(n), targets]
    loss_value = -(picked * mask).sum()
    count = float(mask.sum())

    def backward(grad):
        if logits.requires_grad:
            probs = np.exp(log_probs)
            g = probs
            g[np.arange(n), targets] -= 1.0
            logits._accumulate(grad * g * mask[:, None])

    return Tensor._from_op(np.asarray(loss_value), (logits,), backward), count


def sigmoid_binary_cross_entropy(
    logits: Tensor, labels: np.ndarray, mask: np.ndarray
) -> tuple[Tensor, float]:
    """Masked BCE on logits (numerically stable). Returns (loss_sum, count);
    masked-out positions contribute exactly zero loss and zero gradient."""
    labels = np.asarray(labels, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    x = logits.data
    per = np.maximum(x, 0) - x * labels + np.log1p(np.exp(-np.abs(x)))
    loss_value = (per * mask).sum()
    count = float(mask.sum())

    def backward(grad):
        if logits.requires_grad:
            logits._accumulate(grad * (_sigmoid(x) - labels) * mask)

    return Tensor._from_op(np.asarray(loss_value), (logits,), backward), count


def dropout(x: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; identity when rate is 0."""
    if rate <= 0.0:
        return x
    keep = 1.0 - rate
    mask = (rng.random(x.data.shape) < keep) / keep

    def backward(grad):
        if x.requires_grad:
            x._accumulate(grad * mask)

    return Tensor._from_op(x.data * mask, (x,), backward)
