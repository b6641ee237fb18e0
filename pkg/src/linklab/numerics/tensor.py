"""Reverse-mode automatic differentiation over numpy arrays.

A :class:`Tensor` wraps a float64 ndarray together with an optional gradient
and a backward closure.  Calling :meth:`Tensor.backward` on a scalar loss
walks the recorded graph in reverse topological order and fills ``grad`` on
every tensor that participated in the forward pass.  Gradients are
overwritten on each call, never accumulated across calls.

The op set is deliberately small: broadcasting arithmetic, matmul (with
stacked batch dimensions), a handful of pointwise nonlinearities, reductions,
and the shape/index plumbing needed by the receiver networks.  Convolution
and the training loss live in :mod:`linklab.numerics.ops`.
"""

from __future__ import annotations

import numpy as np

from ..errors import ContractError


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` over the axes that numpy broadcasting expanded."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        if isinstance(data, Tensor):
            raise ContractError("Tensor(data) expects array-like, not Tensor")
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple = ()
        self._backward = None

    # -- construction helpers -------------------------------------------------

    @staticmethod
    def _from_op(data: np.ndarray, parents: tuple, backward) -> "Tensor":
        out = Tensor.__new__(Tensor)
        out.data = data
        out.grad = None
        out.requires_grad = any(p.requires_grad for p in parents)
        if out.requires_grad:
            out._parents = parents
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        return out

    def _accum(self, grad: np.ndarray) -> None:
        self.grad = grad if self.grad is None else self.grad + grad

    # -- basic introspection ---------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    # -- autodiff driver -------------------------------------------------------

    def backward(self) -> None:
        """Backpropagate from a scalar loss; overwrites grads in the graph."""
        if self.size != 1:
            raise ContractError(f"backward() needs a scalar, got shape {self.shape}")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        for node in topo:
            node.grad = None
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)

    # -- arithmetic ------------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_as_tensor(other), self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims: bool = False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, *shape)

    def transpose(self, axes=None):
        return transpose(self, axes)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# -- elementwise ops ----------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data + b.data

    def backward(g):
        if a.requires_grad or a._parents:
            a._accum(_unbroadcast(g, a.shape))
        if b.requires_grad or b._parents:
            b._accum(_unbroadcast(g, b.shape))

    return Tensor._from_op(data, (a, b), backward)


def residual_add(a: Tensor, b: Tensor) -> Tensor:
    """Identity-skip addition; shapes must match exactly (no broadcasting)."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise ContractError(f"residual_add shape mismatch: {a.shape} vs {b.shape}")
    return add(a, b)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data * b.data

    def backward(g):
        if a.requires_grad or a._parents:
            a._accum(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad or b._parents:
            b._accum(_unbroadcast(g * a.data, b.shape))

    return Tensor._from_op(data, (a, b), backward)


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data / b.data

    def backward(g):
        if a.requires_grad or a._parents:
            a._accum(_unbroadcast(g / b.data, a.shape))
        if b.requires_grad or b._parents:
            b._accum(_unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return Tensor._from_op(data, (a, b), backward)


def relu(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    mask = x.data > 0.0
    data = np.where(mask, x.data, 0.0)

    def backward(g):
        x._accum(g * mask)

    return Tensor._from_op(data, (x,), backward)


def exp(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    data = np.exp(x.data)

    def backward(g):
        x._accum(g * data)

    return Tensor._from_op(data, (x,), backward)


def log(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    data = np.log(x.data)

    def backward(g):
        x._accum(g / x.data)

    return Tensor._from_op(data, (x,), backward)


def sqrt(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    data = np.sqrt(x.data)

    def backward(g):
        x._accum(g * 0.5 / data)

    return Tensor._from_op(data, (x,), backward)


def square(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    data = x.data * x.data

    def backward(g):
        x._accum(g * 2.0 * x.data)

    return Tensor._from_op(data, (x,), backward)


# -- linear algebra -----------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ContractError("matmul operands must have at least 2 dimensions")
    data = a.data @ b.data

    def backward(g):
        if a.requires_grad or a._parents:
            ga = g @ b.data.swapaxes(-1, -2)
            a._accum(_unbroadcast(ga, a.shape))
        if b.requires_grad or b._parents:
            gb = a.data.swapaxes(-1, -2) @ g
            b._accum(_unbroadcast(gb, b.shape))

    return Tensor._from_op(data, (a, b), backward)


def dense(x: Tensor, weights: Tensor, bias: Tensor) -> Tensor:
    """Affine map: out[..., m] = bias[m] + sum_n weights[..., m, n] * x[..., n].

    `weights` may carry leading batch dims (one independent affine map per
    batch element), in which case `x` must carry matching leading dims.
    """
    x, weights, bias = _as_tensor(x), _as_tensor(weights), _as_tensor(bias)
    if weights.ndim < 2:
        raise ContractError("dense weights must be at least 2-D (M,N)")
    m, n = weights.shape[-2], weights.shape[-1]
    if x.shape[-1] != n:
        raise ContractError(f"dense: input dim {x.shape[-1]} != weight dim {n}")
    if bias.shape[-1] != m:
        raise ContractError(f"dense: bias dim {bias.shape[-1]} != output dim {m}")
    squeeze = x.ndim == 1
    if squeeze:
        x = reshape(x, 1, n)
    out = add(matmul(x, transpose(weights, _swap_last_two(weights.ndim))), bias)
    if squeeze:
        out = reshape(out, m)
    return out


def _swap_last_two(ndim: int) -> tuple:
    axes = list(range(ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return tuple(axes)


# -- reductions ---------------------------------------------------------------


def tsum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    x = _as_tensor(x)
    data = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        gg = g
        if axis is not None and not keepdims:
            gg = np.expand_dims(gg, axis)
        x._accum(np.broadcast_to(gg, x.shape).copy())

    return Tensor._from_op(np.asarray(data, dtype=np.float64), (x,), backward)


def tmean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    x = _as_tensor(x)
    n = x.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(tsum(x, axis=axis, keepdims=keepdims), 1.0 / float(n))


# -- shape and index plumbing ---------------------------------------------------


def reshape(x: Tensor, *shape) -> Tensor:
    x = _as_tensor(x)
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = tuple(shape[0])
    old = x.shape
    data = x.data.reshape(shape)

    def backward(g):
        x._accum(g.reshape(old))

    return Tensor._from_op(data, (x,), backward)


def transpose(x: Tensor, axes=None) -> Tensor:
    x = _as_tensor(x)
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    data = x.data.transpose(axes)

    def backward(g):
        x._accum(g.transpose(inv))

    return Tensor._from_op(data, (x,), backward)


def index_select(x: Tensor, idx, axis: int = 0) -> Tensor:
    """out = x gathered along `axis` at positions `idx`."""
    x = _as_tensor(x)
    idx = np.asarray(idx, dtype=np.intp)
    data = np.take(x.data, idx, axis=axis)

    def backward(g):
        gx = np.zeros_like(x.data)
        moved = np.moveaxis(gx, axis, 0)
        np.add.at(moved, idx, np.moveaxis(g, axis, 0))
        x._accum(gx)

    return Tensor._from_op(data, (x,), backward)


def scatter_to(x: Tensor, idx, size: int, axis: int = 0) -> Tensor:
    """Inverse of index_select for unique indices: out[idx[i]] = x[i], rest zero."""
    x = _as_tensor(x)
    idx = np.asarray(idx, dtype=np.intp)
    if idx.ndim != 1 or len(np.unique(idx)) != idx.size:
        raise ContractError("scatter_to requires a 1-D array of unique indices")
    if x.shape[axis] != idx.size:
        raise ContractError(f"scatter_to: axis {axis} has {x.shape[axis]} rows, got {idx.size} indices")
    shape = list(x.shape)
    shape[axis] = size
    data = np.zeros(shape, dtype=np.float64)
    moved = np.moveaxis(data, axis, 0)
    moved[idx] = np.moveaxis(x.data, axis, 0)

    def backward(g):
        x._accum(np.moveaxis(np.moveaxis(g, axis, 0)[idx], 0, axis))

    return Tensor._from_op(data, (x,), backward)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        moved = np.moveaxis(g, axis, 0)
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad or t._parents:
                t._accum(np.moveaxis(moved[lo:hi], 0, axis))

    return Tensor._from_op(data, tuple(tensors), backward)
