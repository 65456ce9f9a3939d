"""A small reverse-mode automatic differentiation engine over numpy arrays.

Only the operations the trajectory model needs are provided. Every op
records its inputs and a closure that pushes the output gradient back to
them; :meth:`Tensor.backward` walks the graph in reverse topological order.
Broadcasting follows numpy and gradients are summed back to input shapes.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")
    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self.name = name

    def __repr__(self):
        label = f" {self.name}" if self.name else ""
        return f"Tensor{label}(shape={self.shape})"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def backward(self, grad: np.ndarray | None = None) -> None:
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed gradient needs a scalar output")
            grad = np.ones_like(self.data)
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
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self._accumulate(grad)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

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
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def back(g):
        a._accumulate(_unbroadcast(g, a.shape))
        b._accumulate(_unbroadcast(g, b.shape))

    return _result(a.data + b.data, (a, b), back)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def back(g):
        a._accumulate(_unbroadcast(g, a.shape))
        b._accumulate(_unbroadcast(-g, b.shape))

    return _result(a.data - b.data, (a, b), back)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def back(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _result(a.data * b.data, (a, b), back)


def matmul(a, b) -> Tensor:
    """numpy ``matmul`` for operands of rank >= 2, with batch broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ValueError("matmul operands must have rank >= 2")

    def back(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape))

    return _result(a.data @ b.data, (a, b), back)


def square(a) -> Tensor:
    a = as_tensor(a)
    return _result(a.data * a.data, (a,), lambda g: a._accumulate(2.0 * a.data * g))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _result(out, (a,), lambda g: a._accumulate(g * out))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _result(out, (a,), lambda g: a._accumulate(g * (1.0 - out * out)))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _result(out, (a,), lambda g: a._accumulate(g * out * (1.0 - out)))


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _result(np.where(mask, a.data, 0.0), (a,), lambda g: a._accumulate(g * mask))


def sum(a, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    a = as_tensor(a)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.shape))

    return _result(np.sum(a.data, axis=axis, keepdims=keepdims), (a,), back)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    count = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return mul(sum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return _result(a.data.reshape(shape), (a,), lambda g: a._accumulate(g.reshape(a.shape)))


def broadcast_to(a, shape) -> Tensor:
    a = as_tensor(a)
    return _result(
        np.broadcast_to(a.data, shape).copy(), (a,), lambda g: a._accumulate(_unbroadcast(g, a.shape))
    )


def _is_basic_index(index) -> bool:
    parts = index if isinstance(index, tuple) else (index,)
    return all(isinstance(i, (int, np.integer, slice)) or i is Ellipsis or i is None for i in parts)


def getitem(a, index) -> Tensor:
    a = as_tensor(a)
    basic = _is_basic_index(index)

    def back(g):
        full = np.zeros_like(a.data)
        if basic:
            full[index] += g
        else:
            # fancy indices may repeat rows
            np.add.at(full, index, g)
        a._accumulate(full)

    return _result(a.data[index], (a,), back)


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def back(g):
        for t, part in zip(tensors, np.split(g, splits, axis=axis)):
            t._accumulate(part)

    return _result(np.concatenate([t.data for t in tensors], axis=axis), tensors, back)


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]

    def back(g):
        for k, t in enumerate(tensors):
            t._accumulate(np.take(g, k, axis=axis))

    return _result(np.stack([t.data for t in tensors], axis=axis), tensors, back)


def masked_max(a, mask: np.ndarray, axis: int) -> Tensor:
    """Max of ``a`` over ``axis`` among entries where ``mask`` is true.

    Slices with no valid entry yield 0. Ties send the gradient to the first
    maximal entry.
    """
    a = as_tensor(a)
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), a.shape)
    filled = np.where(mask, a.data, -np.inf)
    arg = np.argmax(filled, axis=axis)
    any_valid = mask.any(axis=axis)
    picked = np.take_along_axis(filled, np.expand_dims(arg, axis), axis=axis).squeeze(axis)
    out = np.where(any_valid, picked, 0.0)

    def back(g):
        g = np.where(any_valid, g, 0.0)
        full = np.zeros_like(a.data)
        np.put_along_axis(full, np.expand_dims(arg, axis), np.expand_dims(g, axis), axis=axis)
        a._accumulate(full)

    return _result(out, (a,), back)


def min_over(a, axis: int) -> Tensor:
    """Minimum over ``axis``; the gradient goes to the first minimal entry."""
    a = as_tensor(a)
    arg = np.argmin(a.data, axis=axis)
    out = np.take_along_axis(a.data, np.expand_dims(arg, axis), axis=axis).squeeze(axis)

    def back(g):
        full = np.zeros_like(a.data)
        np.put_along_axis(full, np.expand_dims(arg, axis), np.expand_dims(g, axis), axis=axis)
        a._accumulate(full)

    return _result(out, (a,), back)


def lstm_cell(x, h, c, wx, wh, b) -> Tensor:
    """Fused LSTM cell; returns ``concat([h_new, c_new], -1)``.

    Gate order in the 4H pre-activation is (input, forget, cell, output).
    """
    x, h, c, wx, wh, b = (as_tensor(t) for t in (x, h, c, wx, wh, b))
    n = h.shape[-1]
    pre = x.data @ wx.data + h.data @ wh.data + b.data
    sig = 0.5 * (1.0 + np.tanh(0.5 * pre))
    i, f, o = sig[..., :n], sig[..., n : 2 * n], sig[..., 3 * n :]
    g = np.tanh(pre[..., 2 * n : 3 * n])
    c_new = f * c.data + i * g
    tc = np.tanh(c_new)
    h_new = o * tc

    def back(grad):
        gh, gc = grad[..., :n], grad[..., n:]
        dc = gc + gh * o * (1.0 - tc * tc)
        d_pre = np.concatenate(
            [dc * g * i * (1.0 - i), dc * c.data * f * (1.0 - f), dc * i * (1.0 - g * g), gh * tc * o * (1.0 - o)],
            axis=-1,
        )
        flat = d_pre.reshape(-1, 4 * n)
        if x.requires_grad:
            x._accumulate(d_pre @ wx.data.T)
        if h.requires_grad:
            h._accumulate(d_pre @ wh.data.T)
        if c.requires_grad:
            c._accumulate(dc * f)
        if wx.requires_grad:
            wx._accumulate(x.data.reshape(-1, x.shape[-1]).T @ flat)
        if wh.requires_grad:
            wh._accumulate(h.data.reshape(-1, n).T @ flat)
        if b.requires_grad:
            b._accumulate(flat.sum(axis=0))

    return _result(np.concatenate([h_new, c_new], axis=-1), (x, h, c, wx, wh, b), back)
