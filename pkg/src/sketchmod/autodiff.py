"""Reverse-mode automatic differentiation on numpy arrays.

Every ``Tensor`` wraps a float64 ndarray and records a backward closure when
gradients are enabled, so a loss scalar can be differentiated with a single
topological sweep.  The op set is exactly what the models in this package
need; anything fancier should be composed from these primitives so the
backward pass stays trivially auditable.
"""

from __future__ import annotations

import contextlib

import numpy as np
from scipy.special import erf

_GRAD_ENABLED = True

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


class ShapeMismatch(ValueError):
    """Operand shapes are incompatible; message carries both shapes."""


class NotScalar(ValueError):
    """backward() called on a non-scalar without an explicit output gradient."""


class DetachedTensor(RuntimeError):
    """backward() called on a tensor with no recorded graph behind it."""


@contextlib.contextmanager
def no_grad():
    """Disable tape construction inside the block (forward-only evaluation)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def _combine(op, a, b):
    try:
        return op(a, b)
    except ValueError as exc:
        raise ShapeMismatch(f"{a.shape} vs {b.shape}: {exc}") from None


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_children", "_backward")

    def __init__(self, data, requires_grad=False, _children=()):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._children = _children
        self._backward = None

    # ------------------------------------------------------------- plumbing

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def detach(self):
        return Tensor(self.data)

    def item(self):
        return float(self.data)

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    @staticmethod
    def _make(data, parents, backward):
        track = _GRAD_ENABLED and any(p.requires_grad for p in parents)
        out = Tensor(data, requires_grad=track, _children=tuple(parents) if track else ())
        if track:
            out._backward = backward
        return out

    def backward(self, grad=None):
        if not self.requires_grad:
            raise DetachedTensor("tensor has no graph: built under no_grad or from constants")
        if grad is None:
            if self.data.size != 1:
                raise NotScalar("backward() without an explicit gradient needs a scalar")
            grad = np.ones_like(self.data)
        # iterative topo sort: graphs can run deep through stacked layers
        topo, visited, stack = [], set(), [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for child in node._children:
                if id(child) not in visited:
                    stack.append((child, False))
        self._accumulate(np.asarray(grad, dtype=np.float64))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # ----------------------------------------------------------- arithmetic

    def __add__(self, other):
        other = as_tensor(other)
        out_data = _combine(np.add, self.data, other.data)

        def backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g, other.data.shape))

        return Tensor._make(out_data, (self, other), backward)

    def __mul__(self, other):
        other = as_tensor(other)
        out_data = _combine(np.multiply, self.data, other.data)

        def backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g * other.data, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g * self.data, other.data.shape))

        return Tensor._make(out_data, (self, other), backward)

    def __truediv__(self, other):
        other = as_tensor(other)
        out_data = _combine(np.divide, self.data, other.data)

        def backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g / other.data, self.data.shape))
            if other.requires_grad:
                other._accumulate(
                    _unbroadcast(-g * self.data / other.data**2, other.data.shape)
                )

        return Tensor._make(out_data, (self, other), backward)

    def __pow__(self, p):
        assert isinstance(p, (int, float))
        out_data = self.data**p

        def backward(g):
            self._accumulate(g * p * self.data ** (p - 1))

        return Tensor._make(out_data, (self,), backward)

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __radd__(self, other):
        return self + other

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __rmul__(self, other):
        return self * other

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __matmul__(self, other):
        other = as_tensor(other)
        assert self.ndim >= 2 and other.ndim >= 2, "matmul expects stacked matrices"
        out_data = _combine(np.matmul, self.data, other.data)

        def backward(g):
            if self.requires_grad:
                self._accumulate(
                    _unbroadcast(g @ other.data.swapaxes(-1, -2), self.data.shape)
                )
            if other.requires_grad:
                other._accumulate(
                    _unbroadcast(self.data.swapaxes(-1, -2) @ g, other.data.shape)
                )

        return Tensor._make(out_data, (self, other), backward)

    # ----------------------------------------------------------- reductions

    def sum(self, axis=None, keepdims=False):
        out_data = self.data.sum(axis=axis, keepdims=keepdims)

        def backward(g):
            if axis is not None and not keepdims:
                axes = axis if isinstance(axis, tuple) else (axis,)
                g = np.expand_dims(g, axes)
            self._accumulate(np.broadcast_to(g, self.data.shape).copy())

        return Tensor._make(out_data, (self,), backward)

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else np.prod(
            [self.data.shape[a] for a in (axis if isinstance(axis, tuple) else (axis,))]
        )
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / float(n))

    # ------------------------------------------------------------ pointwise

    def exp(self):
        out_data = np.exp(self.data)

        def backward(g):
            self._accumulate(g * out_data)

        return Tensor._make(out_data, (self,), backward)

    def log(self):
        out_data = np.log(self.data)

        def backward(g):
            self._accumulate(g / self.data)

        return Tensor._make(out_data, (self,), backward)

    def sqrt(self):
        out_data = np.sqrt(self.data)

        def backward(g):
            self._accumulate(g * 0.5 / out_data)

        return Tensor._make(out_data, (self,), backward)

    def tanh(self):
        out_data = np.tanh(self.data)

        def backward(g):
            self._accumulate(g * (1.0 - out_data**2))

        return Tensor._make(out_data, (self,), backward)

    def sigmoid(self):
        x = self.data
        out_data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                            np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

        def backward(g):
            self._accumulate(g * out_data * (1.0 - out_data))

        return Tensor._make(out_data, (self,), backward)

    def gelu(self):
        # exact Gaussian-error-function form, not the tanh approximation
        x = self.data
        cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
        out_data = x * cdf

        def backward(g):
            pdf = _INV_SQRT2PI * np.exp(-0.5 * x * x)
            self._accumulate(g * (cdf + x * pdf))

        return Tensor._make(out_data, (self,), backward)

    def clamp_min(self, lo):
        out_data = np.maximum(self.data, lo)

        def backward(g):
            self._accumulate(g * (self.data > lo))

        return Tensor._make(out_data, (self,), backward)

    def masked_fill(self, mask, value):
        """Replace entries where `mask` is True with `value`; no grad flows there."""
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), self.data.shape)
        out_data = np.where(mask, value, self.data)

        def backward(g):
            self._accumulate(np.where(mask, 0.0, g))

        return Tensor._make(out_data, (self,), backward)

    # ---------------------------------------------------- softmax and friends

    def logsumexp(self):
        """log-sum-exp over the last axis (keepdims); -inf rows stay -inf."""
        m = self.data.max(axis=-1, keepdims=True)
        shift = np.where(np.isfinite(m), m, 0.0)
        with np.errstate(divide="ignore"):
            out_data = shift + np.log(np.exp(self.data - shift).sum(axis=-1, keepdims=True))

        def backward(g):
            with np.errstate(invalid="ignore"):
                soft = np.exp(self.data - out_data)
            self._accumulate(g * np.where(np.isfinite(self.data), soft, 0.0))

        return Tensor._make(out_data, (self,), backward)

    def softmax(self):
        """Softmax over the last axis; -inf entries get an exact zero probability."""
        m = self.data.max(axis=-1, keepdims=True)
        shift = np.where(np.isfinite(m), m, 0.0)
        e = np.exp(self.data - shift)
        out_data = e / e.sum(axis=-1, keepdims=True)

        def backward(g):
            inner = (g * out_data).sum(axis=-1, keepdims=True)
            self._accumulate(out_data * (g - inner))

        return Tensor._make(out_data, (self,), backward)

    def log_softmax(self):
        return self - self.logsumexp()

    # -------------------------------------------------------------- reshaping

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out_data = self.data.reshape(shape)

        def backward(g):
            self._accumulate(g.reshape(self.data.shape))

        return Tensor._make(out_data, (self,), backward)

    def transpose(self, *axes):
        axes = axes or tuple(reversed(range(self.ndim)))
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        out_data = self.data.transpose(axes)
        inverse = np.argsort(axes)

        def backward(g):
            self._accumulate(g.transpose(inverse))

        return Tensor._make(out_data, (self,), backward)

    def swapaxes(self, a, b):
        axes = list(range(self.ndim))
        axes[a], axes[b] = axes[b], axes[a]
        return self.transpose(*axes)

    def __getitem__(self, idx):
        out_data = self.data[idx]

        def backward(g):
            if self.grad is None:
                self.grad = np.zeros_like(self.data)
            np.add.at(self.grad, idx, g)

        return Tensor._make(out_data, (self,), backward)

    # ----------------------------------------------------------- image shapes

    def pad2d(self, p):
        """Zero-pad the two spatial axes of a (..., H, W, C) tensor by p."""
        pad = [(0, 0)] * self.ndim
        pad[-3] = (p, p)
        pad[-2] = (p, p)
        out_data = np.pad(self.data, pad)

        def backward(g):
            sl = [slice(None)] * self.ndim
            sl[-3] = slice(p, g.shape[-3] - p)
            sl[-2] = slice(p, g.shape[-2] - p)
            self._accumulate(g[tuple(sl)])

        return Tensor._make(out_data, (self,), backward)

    def upsample2x(self):
        """Nearest-neighbour 2x upsampling of a (..., H, W, C) tensor."""
        out_data = np.repeat(np.repeat(self.data, 2, axis=-3), 2, axis=-2)

        def backward(g):
            lead = g.shape[:-3]
            h, w, c = g.shape[-3] // 2, g.shape[-2] // 2, g.shape[-1]
            self._accumulate(g.reshape(*lead, h, 2, w, 2, c).sum(axis=(-4, -2)))

        return Tensor._make(out_data, (self,), backward)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = np.cumsum([t.data.shape[axis] for t in tensors])[:-1]

    def backward(g):
        for t, piece in zip(tensors, np.split(g, sizes, axis=axis)):
            if t.requires_grad:
                t._accumulate(piece)

    return Tensor._make(out_data, tuple(tensors), backward)


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    out_data = np.stack([t.data for t in tensors], axis=axis)

    def backward(g):
        for i, t in enumerate(tensors):
            if t.requires_grad:
                t._accumulate(np.take(g, i, axis=axis))

    return Tensor._make(out_data, tuple(tensors), backward)


def layer_norm(x, gain, bias, eps=1e-5):
    """Normalize over the last axis, then apply an affine map.

    Built from primitives so the backward pass needs no bespoke derivation.
    """
    mu = x.mean(axis=-1, keepdims=True)
    centred = x - mu
    var = (centred * centred).mean(axis=-1, keepdims=True)
    return centred / (var + eps).sqrt() * gain + bias


def conv3x3(x, weight, bias=None):
    """3x3 same-padding convolution on (..., H, W, C_in) via shifted slices.

    `weight` has shape (9 * C_in, C_out): rows ordered by kernel offset
    (dy, dx) scanning dy then dx, each block of C_in rows belonging to one tap.
    """
    h, w = x.shape[-3], x.shape[-2]
    padded = x.pad2d(1)
    taps = []
    for dy in range(3):
        for dx in range(3):
            sl = [slice(None)] * x.ndim
            sl[-3] = slice(dy, dy + h)
            sl[-2] = slice(dx, dx + w)
            taps.append(padded[tuple(sl)])
    gathered = concat(taps, axis=-1)
    out = gathered @ weight
    if bias is not None:
        out = out + bias
    return out


def mse(a, b):
    d = as_tensor(a) - as_tensor(b)
    return (d * d).mean()
