"""Reverse-mode autodiff over float64 numpy arrays.

Each op builds a node holding its inputs and a closure that routes the
output gradient back to them; ``backward()`` walks the graph once in
reverse topological order.  Every op checks its result for NaN/Inf and
raises :class:`NumericalHealthError` on the spot, so a diverging training
run fails at the op that produced the bad value instead of three modules
later.
"""

import numpy as np

from ..errors import NumericalHealthError


def _check_finite(data, op):
    if not np.all(np.isfinite(data)):
        raise NumericalHealthError(f"non-finite values produced by op '{op}'")


def _unbroadcast(grad, shape):
    """Sum a gradient back down to the shape it was broadcast from."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _ensure_tensor(value):
    return value if isinstance(value, Tensor) else Tensor(value)


class Tensor:
    """Array node in the autodiff graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        _check_finite(self.data, "leaf")
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    @classmethod
    def _node(cls, data, parents, backward, op):
        out = cls.__new__(cls)
        out.data = data
        _check_finite(data, op)
        out.grad = None
        out.requires_grad = any(p.requires_grad for p in parents)
        if out.requires_grad:
            out._parents = tuple(p for p in parents if p.requires_grad)
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        return out

    # -- plumbing ----------------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, grad):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad

    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed needs a scalar output")
            grad = np.ones_like(self.data)
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))
        self._accumulate(np.asarray(grad, dtype=np.float64))
        for node in reversed(topo):
            if node._backward is not None:
                node._backward()

    # -- arithmetic --------------------------------------------------------

    def __add__(self, other):
        other = _ensure_tensor(other)
        data = self.data + other.data

        def backward():
            g = out.grad
            if self.requires_grad:
                self._accumulate(_unbroadcast(g, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g, other.data.shape))

        out = Tensor._node(data, (self, other), backward, "add")
        return out

    __radd__ = __add__

    def __neg__(self):
        data = -self.data

        def backward():
            self._accumulate(-out.grad)

        out = Tensor._node(data, (self,), backward, "neg")
        return out

    def __sub__(self, other):
        other = _ensure_tensor(other)
        data = self.data - other.data

        def backward():
            g = out.grad
            if self.requires_grad:
                self._accumulate(_unbroadcast(g, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(-g, other.data.shape))

        out = Tensor._node(data, (self, other), backward, "sub")
        return out

    def __rsub__(self, other):
        return _ensure_tensor(other) - self

    def __mul__(self, other):
        other = _ensure_tensor(other)
        data = self.data * other.data

        def backward():
            g = out.grad
            if self.requires_grad:
                self._accumulate(_unbroadcast(g * other.data, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g * self.data, other.data.shape))

        out = Tensor._node(data, (self, other), backward, "mul")
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _ensure_tensor(other)
        data = self.data / other.data

        def backward():
            g = out.grad
            if self.requires_grad:
                self._accumulate(_unbroadcast(g / other.data, self.data.shape))
            if other.requires_grad:
                other._accumulate(
                    _unbroadcast(-g * self.data / (other.data * other.data), other.data.shape)
                )

        out = Tensor._node(data, (self, other), backward, "div")
        return out

    def __rtruediv__(self, other):
        return _ensure_tensor(other) / self

    def __pow__(self, exponent):
        if not isinstance(exponent, (int, float)):
            raise TypeError("only constant exponents are supported")
        data = self.data ** exponent

        def backward():
            self._accumulate(out.grad * exponent * self.data ** (exponent - 1))

        out = Tensor._node(data, (self,), backward, "pow")
        return out

    def __matmul__(self, other):
        other = _ensure_tensor(other)
        data = self.data @ other.data

        def backward():
            g = out.grad
            if self.requires_grad:
                self._accumulate(g @ other.data.swapaxes(-1, -2))
            if other.requires_grad:
                other._accumulate(self.data.swapaxes(-1, -2) @ g)

        out = Tensor._node(data, (self, other), backward, "matmul")
        return out

    # -- elementwise functions ----------------------------------------------

    def exp(self):
        data = np.exp(self.data)

        def backward():
            self._accumulate(out.grad * data)

        out = Tensor._node(data, (self,), backward, "exp")
        return out

    def log(self):
        data = np.log(self.data)

        def backward():
            self._accumulate(out.grad / self.data)

        out = Tensor._node(data, (self,), backward, "log")
        return out

    def tanh(self):
        data = np.tanh(self.data)

        def backward():
            self._accumulate(out.grad * (1.0 - data * data))

        out = Tensor._node(data, (self,), backward, "tanh")
        return out

    def sigmoid(self):
        data = np.empty_like(self.data)
        pos = self.data >= 0
        data[pos] = 1.0 / (1.0 + np.exp(-self.data[pos]))
        ez = np.exp(self.data[~pos])
        data[~pos] = ez / (1.0 + ez)

        def backward():
            self._accumulate(out.grad * data * (1.0 - data))

        out = Tensor._node(data, (self,), backward, "sigmoid")
        return out

    def relu(self):
        data = np.maximum(self.data, 0.0)

        def backward():
            self._accumulate(out.grad * (self.data > 0))

        out = Tensor._node(data, (self,), backward, "relu")
        return out

    def clip(self, lo, hi):
        """Clamp values; gradient passes only through the interior."""
        data = np.clip(self.data, lo, hi)

        def backward():
            inside = (self.data > lo) & (self.data < hi)
            self._accumulate(out.grad * inside)

        out = Tensor._node(data, (self,), backward, "clip")
        return out

    def maximum(self, floor):
        """Elementwise max against a constant; ties route gradient here."""
        data = np.maximum(self.data, floor)

        def backward():
            self._accumulate(out.grad * (self.data >= floor))

        out = Tensor._node(data, (self,), backward, "maximum")
        return out

    # -- reductions and shape ops --------------------------------------------

    def sum(self, axis=None, keepdims=False):
        data = self.data.sum(axis=axis, keepdims=keepdims)

        def backward():
            g = out.grad
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            self._accumulate(np.broadcast_to(g, self.data.shape).copy())

        out = Tensor._node(np.asarray(data), (self,), backward, "sum")
        return out

    def mean(self, axis=None, keepdims=False):
        count = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        data = self.data.reshape(shape)

        def backward():
            self._accumulate(out.grad.reshape(self.data.shape))

        out = Tensor._node(data, (self,), backward, "reshape")
        return out

    def swapaxes(self, a, b):
        data = self.data.swapaxes(a, b)

        def backward():
            self._accumulate(out.grad.swapaxes(a, b))

        out = Tensor._node(data, (self,), backward, "swapaxes")
        return out

    @property
    def T(self):
        return self.swapaxes(-1, -2)

    def __getitem__(self, index):
        data = self.data[index]

        def backward():
            buf = np.zeros_like(self.data)
            np.add.at(buf, index, out.grad)
            self._accumulate(buf)

        out = Tensor._node(np.asarray(data), (self,), backward, "getitem")
        return out


def concat(tensors, axis=0):
    tensors = [_ensure_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]

    def backward():
        offset = 0
        for t, size in zip(tensors, sizes):
            if t.requires_grad:
                sel = [slice(None)] * data.ndim
                sel[axis] = slice(offset, offset + size)
                t._accumulate(out.grad[tuple(sel)])
            offset += size

    out = Tensor._node(data, tuple(tensors), backward, "concat")
    return out
