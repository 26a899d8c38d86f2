"""Reverse-mode automatic differentiation over dense float64 arrays.

A Tensor wraps a numpy array together with the recipe that produced it.
Calling ``backward()`` on a scalar result walks the recorded graph in
reverse topological order and accumulates gradients on every tensor that
requires them.  Only the operations needed by the attention network are
provided; all of them support numpy broadcasting, with gradients summed
back over broadcast axes.
"""

from __future__ import annotations

import numpy as np


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient over the axes numpy broadcast, back to ``shape``."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    keep = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if keep:
        grad = grad.sum(axis=keep, keepdims=True)
    return grad.reshape(shape)


def _reduce_leading(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum away leading batch axes a matmul operand was broadcast over."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    return grad


class Tensor:
    """A float64 array plus an optional gradient and autodiff record."""

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._grad_fn = None  # maps the output gradient to per-parent gradients

    # -- construction helpers -------------------------------------------------

    @classmethod
    def _from_op(cls, data, parents, grad_fn) -> "Tensor":
        out = cls(data, requires_grad=any(p.requires_grad for p in parents))
        if out.requires_grad:
            out._parents = tuple(parents)
            out._grad_fn = grad_fn
        return out

    @staticmethod
    def _wrap(value) -> "Tensor":
        return value if isinstance(value, Tensor) else Tensor(value)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def __repr__(self) -> str:
        grad = "with grad" if self.grad is not None else "no grad"
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}, {grad})"

    # -- elementwise arithmetic -----------------------------------------------

    def __add__(self, other) -> "Tensor":
        a, b = self, Tensor._wrap(other)
        return Tensor._from_op(
            a.data + b.data,
            (a, b),
            lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
        )

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        return Tensor._from_op(-self.data, (self,), lambda g: (-g,))

    def __sub__(self, other) -> "Tensor":
        return self + (-Tensor._wrap(other))

    def __rsub__(self, other) -> "Tensor":
        return Tensor._wrap(other) + (-self)

    def __mul__(self, other) -> "Tensor":
        a, b = self, Tensor._wrap(other)
        return Tensor._from_op(
            a.data * b.data,
            (a, b),
            lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
        )

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        a, b = self, Tensor._wrap(other)
        return Tensor._from_op(
            a.data / b.data,
            (a, b),
            lambda g: (
                _unbroadcast(g / b.data, a.shape),
                _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
            ),
        )

    def __matmul__(self, other) -> "Tensor":
        a, b = self, Tensor._wrap(other)
        if a.ndim < 2 or b.ndim < 2:
            raise ValueError("matmul operands must have at least 2 dimensions")

        def grad_fn(g):
            ga = _reduce_leading(g @ np.swapaxes(b.data, -1, -2), a.shape)
            gb = _reduce_leading(np.swapaxes(a.data, -1, -2) @ g, b.shape)
            return ga, gb

        return Tensor._from_op(a.data @ b.data, (a, b), grad_fn)

    # -- nonlinearities ---------------------------------------------------------

    def relu(self) -> "Tensor":
        keep = self.data > 0
        return Tensor._from_op(np.where(keep, self.data, 0.0), (self,), lambda g: (g * keep,))

    def sigmoid(self) -> "Tensor":
        # Overflow-safe logistic in both tails.
        z = np.exp(-np.abs(self.data))
        out = np.where(self.data >= 0, 1.0 / (1.0 + z), z / (1.0 + z))
        return Tensor._from_op(out, (self,), lambda g: (g * out * (1.0 - out),))

    def exp(self) -> "Tensor":
        out = np.exp(self.data)
        return Tensor._from_op(out, (self,), lambda g: (g * out,))

    def square(self) -> "Tensor":
        return self * self

    # -- shape manipulation -----------------------------------------------------

    def reshape(self, shape) -> "Tensor":
        old = self.shape
        return Tensor._from_op(self.data.reshape(shape), (self,), lambda g: (g.reshape(old),))

    def swapaxes(self, axis1: int, axis2: int) -> "Tensor":
        return Tensor._from_op(
            np.swapaxes(self.data, axis1, axis2),
            (self,),
            lambda g: (np.swapaxes(g, axis1, axis2),),
        )

    def __getitem__(self, index) -> "Tensor":
        data = self.data
        def grad_fn(g):
            full = np.zeros_like(data)
            np.add.at(full, index, g)
            return (full,)
        return Tensor._from_op(data[index], (self,), grad_fn)

    # -- reductions ---------------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        shape = self.shape

        def grad_fn(g):
            if axis is None:
                return (np.broadcast_to(g, shape).copy(),)
            g_exp = g if keepdims else np.expand_dims(g, axis)
            return (np.broadcast_to(g_exp, shape).copy(),)

        return Tensor._from_op(self.data.sum(axis=axis, keepdims=keepdims), (self,), grad_fn)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        count = self.data.size if axis is None else self.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    # -- reverse pass ---------------------------------------------------------------

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) on every reachable gradient-requiring tensor.

        Must be called on a scalar produced by recorded operations; calling it
        on a tensor with no forward record is an error.
        """
        if self.data.size != 1:
            raise RuntimeError("backward requires a scalar loss")
        if self._grad_fn is None:
            raise RuntimeError("backward called without a recorded forward computation")

        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))

        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._grad_fn is None:
                continue
            grads = node._grad_fn(node.grad)
            for parent, grad in zip(node._parents, grads):
                if not parent.requires_grad:
                    continue
                parent.grad = grad if parent.grad is None else parent.grad + grad
