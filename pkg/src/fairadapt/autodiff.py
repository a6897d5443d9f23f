"""Minimal reverse-mode automatic differentiation over float64 numpy arrays.

Every loss in the training pipeline is a scalar, so one reverse sweep per
step covers all parameters.  Operations record their parents and a backward
closure on the output tensor; `backward()` walks the implicit graph in
reverse topological order and accumulates gradients additively, in a fixed
(construction) order so runs are deterministic.

The gradient contract is enforced by `finite_diff_check`, which compares
any analytic gradient against central differences.
"""

from dataclasses import dataclass

import numpy as np


class GradientError(Exception):
    pass


def _as_array(x):
    return np.asarray(x, dtype=np.float64)


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    """A node in the differentiation graph.

    `data` is always a float64 ndarray (0-d for scalars).  Gradient buffers
    share the value's shape.  Leaf tensors with `requires_grad=True` receive
    accumulated gradients in `.grad` after `backward()`.
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = _as_array(data)
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents = ()
        self._backward = None

    # -- graph construction -------------------------------------------------

    @classmethod
    def _result(cls, data, parents, backward, name=None):
        out = cls(data, requires_grad=any(p.requires_grad for p in parents))
        out.name = name
        if out.requires_grad:
            out._parents = tuple(parents)
            out._backward = backward
        return out

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, grad):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad

    # -- arithmetic ----------------------------------------------------------

    def __add__(self, other):
        other = as_tensor(other)

        def backward(g, a=self, b=other):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g, b.shape))

        return Tensor._result(self.data + other.data, (self, other), backward, "add")

    __radd__ = __add__

    def __neg__(self):
        def backward(g, a=self):
            if a.requires_grad:
                a._accumulate(-g)

        return Tensor._result(-self.data, (self,), backward, "neg")

    def __sub__(self, other):
        other = as_tensor(other)

        def backward(g, a=self, b=other):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(-g, b.shape))

        return Tensor._result(self.data - other.data, (self, other), backward, "sub")

    def __rsub__(self, other):
        return as_tensor(other).__sub__(self)

    def __mul__(self, other):
        other = as_tensor(other)

        def backward(g, a=self, b=other):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g * b.data, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g * a.data, b.shape))

        return Tensor._result(self.data * other.data, (self, other), backward, "mul")

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)

        def backward(g, a=self, b=other):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g / b.data, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(-g * a.data / (b.data * b.data), b.shape))

        return Tensor._result(self.data / other.data, (self, other), backward, "div")

    def __rtruediv__(self, other):
        return as_tensor(other).__truediv__(self)

    def __matmul__(self, other):
        other = as_tensor(other)

        def backward(g, a=self, b=other):
            if a.requires_grad:
                if b.data.ndim == 1:
                    a._accumulate(np.outer(g, b.data) if a.data.ndim == 2
                                  else g * b.data)
                else:
                    a._accumulate(g @ b.data.T)
            if b.requires_grad:
                if a.data.ndim == 1:
                    b._accumulate(np.outer(a.data, g) if b.data.ndim == 2
                                  else g * a.data)
                else:
                    b._accumulate(a.data.T @ g)

        return Tensor._result(self.data @ other.data, (self, other), backward, "matmul")

    def __getitem__(self, key):
        def backward(g, a=self, key=key):
            if a.requires_grad:
                buf = np.zeros_like(a.data)
                np.add.at(buf, key, g)
                a._accumulate(buf)

        return Tensor._result(self.data[key], (self,), backward, "getitem")

    # -- elementwise functions -------------------------------------------------

    def log(self):
        def backward(g, a=self):
            if a.requires_grad:
                a._accumulate(g / a.data)

        return Tensor._result(np.log(self.data), (self,), backward, "log")

    def exp(self):
        out_data = np.exp(self.data)

        def backward(g, a=self, d=out_data):
            if a.requires_grad:
                a._accumulate(g * d)

        return Tensor._result(out_data, (self,), backward, "exp")

    def exp2(self):
        out_data = np.exp2(self.data)

        def backward(g, a=self, d=out_data):
            if a.requires_grad:
                a._accumulate(g * d * np.log(2.0))

        return Tensor._result(out_data, (self,), backward, "exp2")

    def relu(self):
        mask = self.data > 0

        def backward(g, a=self, mask=mask):
            if a.requires_grad:
                a._accumulate(g * mask)

        return Tensor._result(np.where(mask, self.data, 0.0), (self,), backward, "relu")

    def softplus(self):
        # ln(1 + e^x), stably: max(x, 0) + log1p(e^{-|x|}); gradient sigmoid(x)
        x = self.data
        out_data = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))

        def backward(g, a=self):
            if a.requires_grad:
                with np.errstate(over="ignore"):
                    sig = 1.0 / (1.0 + np.exp(-a.data))
                a._accumulate(g * sig)

        return Tensor._result(out_data, (self,), backward, "softplus")

    # -- reductions / indexing ---------------------------------------------------

    def sum(self, axis=None):
        def backward(g, a=self, axis=axis):
            if not a.requires_grad:
                return
            if axis is None:
                a._accumulate(np.broadcast_to(g, a.shape).copy())
            else:
                a._accumulate(np.broadcast_to(np.expand_dims(g, axis), a.shape).copy())

        return Tensor._result(self.data.sum(axis=axis), (self,), backward, "sum")

    def mean(self, axis=None):
        n = self.size if axis is None else self.shape[axis]
        return self.sum(axis=axis) / float(n)

    def take(self, indices):
        """Gather rows (axis 0); backward scatter-adds into the source."""
        indices = np.asarray(indices)

        def backward(g, a=self, idx=indices):
            if a.requires_grad:
                buf = np.zeros_like(a.data)
                np.add.at(buf, idx, g)
                a._accumulate(buf)

        return Tensor._result(self.data[indices], (self,), backward, "take")

    def reshape(self, shape):
        def backward(g, a=self):
            if a.requires_grad:
                a._accumulate(g.reshape(a.shape))

        return Tensor._result(self.data.reshape(shape), (self,), backward, "reshape")

    # -- backward driver ------------------------------------------------------

    def backward(self):
        """Reverse accumulation from this scalar root to every leaf."""
        if self.data.size != 1:
            raise GradientError(f"backward root must be scalar, got shape {self.shape}")
        order = _toposort(self)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is None:
                continue
            if node.grad is None:
                continue
            if np.any(np.isnan(node.grad)):
                raise GradientError(f"NaN gradient at node {node.name!r}")
            node._backward(node.grad)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, grad={self.requires_grad})"


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def constant(x, name=None):
    return Tensor(x, requires_grad=False, name=name)


def parameter(x, name=None):
    return Tensor(np.array(x, dtype=np.float64), requires_grad=True, name=name)


def _toposort(root):
    order, seen, stack = [], set(), [(root, False)]
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
            if id(p) not in seen:
                stack.append((p, False))
    return order


def segment_sum(values, segment_ids, num_segments):
    """Differentiable scatter-add of `values` into `num_segments` bins.

    `segment_ids` has the same shape as `values`; entries of -1 are dropped
    (items without a bin contribute nothing and receive zero gradient).
    """
    values = as_tensor(values)
    ids = np.asarray(segment_ids)
    keep = ids >= 0
    out_data = np.zeros(num_segments, dtype=np.float64)
    np.add.at(out_data, ids[keep], values.data[keep])

    def backward(g, a=values, ids=ids, keep=keep):
        if a.requires_grad:
            buf = np.zeros_like(a.data)
            buf[keep] = g[ids[keep]]
            a._accumulate(buf)

    return Tensor._result(out_data, (values,), backward, "segment_sum")


@dataclass
class FiniteDiffReport:
    analytic: np.ndarray
    numeric: np.ndarray
    rel_error: np.ndarray
    tol: float
    passed: np.ndarray

    @property
    def ok(self):
        return bool(self.passed.all())

    @property
    def max_rel_error(self):
        return float(self.rel_error.max()) if self.rel_error.size else 0.0

    def failures(self):
        return np.flatnonzero(~self.passed)


def finite_diff_check(f, theta, eps=1e-4, tol=1e-3):
    """Validate an analytic gradient against central differences.

    `f(theta)` must return `(value, grad)` for a flat float64 parameter
    vector.  The relative error denominator is floored at 1e-8 so zero
    gradients compare in absolute terms.
    """
    theta = _as_array(theta).ravel().copy()
    value, analytic = f(theta)
    analytic = _as_array(analytic).ravel().copy()
    if np.isnan(value) or np.any(np.isnan(analytic)):
        raise GradientError("function returned NaN during finite_diff_check")
    numeric = np.empty_like(theta)
    for i in range(theta.size):
        step = np.zeros_like(theta)
        step[i] = eps
        up, _ = f(theta + step)
        dn, _ = f(theta - step)
        if np.isnan(up) or np.isnan(dn):
            raise GradientError(f"function returned NaN at coordinate {i}")
        numeric[i] = (up - dn) / (2.0 * eps)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    rel = np.abs(analytic - numeric) / denom
    return FiniteDiffReport(analytic, numeric, rel, tol, rel <= tol)
