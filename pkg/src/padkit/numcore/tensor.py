"""Tensor with tape-free reverse-mode differentiation.

Every op output keeps references to its parents plus a closure mapping the
upstream gradient to one gradient per parent.  ``backward`` walks the graph in
reverse topological order and sums contributions, so a tensor used twice gets
both gradients.  Only leaves (tensors without parents) keep ``.grad``.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np


class DimensionError(ValueError):
    """Shapes of the operands do not line up."""


class ConfigurationError(ValueError):
    """A geometry or option combination that cannot be realised."""


class UsageError(RuntimeError):
    """API called in a state where the call is meaningless."""


class NumericError(FloatingPointError):
    """An op produced NaN or Inf."""


DEFAULT_DTYPE = np.float32


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str | None = None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=dtype or DEFAULT_DTYPE)
        if arr.ndim == 0:
            arr = arr.reshape(())
        self.data: np.ndarray = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._parents: tuple = ()
        self._backward: Optional[Callable] = None
        self.name = name

    # ------------------------------------------------------------------ basics
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise UsageError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False, dtype=self.data.dtype)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label}, requires_grad={self.requires_grad})"

    def __len__(self) -> int:
        return self.shape[0]

    # ----------------------------------------------------------- graph plumbing
    @classmethod
    def _make(cls, data: np.ndarray, parents: Sequence["Tensor"], backward: Callable) -> "Tensor":
        if not np.all(np.isfinite(data)):
            raise NumericError("non-finite value in op output")
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.name = None
        live = tuple(p for p in parents if p.requires_grad)
        out.requires_grad = bool(live)
        if live:
            out._parents = tuple(parents)
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        return out

    def backward(self) -> None:
        backward(self)

    # --------------------------------------------------------------- operators
    def __add__(self, other):
        from padkit.numcore import ops

        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from padkit.numcore import ops

        return ops.sub(self, other)

    def __rsub__(self, other):
        from padkit.numcore import ops

        return ops.add(ops.neg(self), other)

    def __mul__(self, other):
        from padkit.numcore import ops

        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from padkit.numcore import ops

        return ops.neg(self)

    def sum(self, axis=None):
        from padkit.numcore import ops

        return ops.sum(self, axis)

    def mean(self, axis=None):
        from padkit.numcore import ops

        return ops.mean(self, axis)

    def reshape(self, *shape):
        from padkit.numcore import ops

        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)


def _toposort(root: Tensor) -> list:
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


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` on every leaf with ``requires_grad`` reachable from ``loss``.

    Gradients add onto whatever is already stored in ``.grad``.
    """
    if loss.data.size != 1:
        raise UsageError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    order = _toposort(loss)
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            g = np.zeros_like(node.data)
        if node._backward is None:
            if node.grad is None:
                node.grad = g.astype(node.data.dtype, copy=True)
            else:
                node.grad += g
            continue
        pgrads = node._backward(g)
        for p, pg in zip(node._parents, pgrads):
            if pg is None or not p.requires_grad:
                continue
            key = id(p)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
