"""Minimal reverse-mode autodiff over numpy arrays.

All tensors are float64. The graph is a dynamic tape: every op records its
parents and a closure that scatters the upstream gradient. Shapes here are
small and fixed, so there is no fusion or memory planning; clarity and
checkable gradients win over speed. Hot per-pixel work lives in
``motiongs._kernels`` behind custom ops instead.
"""

from __future__ import annotations

import numpy as np


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


_EPOCH = [0]  # bumped per backward() call; lets multi-output custom ops fire once per call


class Tensor:
    """A node in the autodiff graph wrapping a float64 ndarray."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad) or any(p.requires_grad for p in _parents)
        self._parents = _parents
        self._backward = _backward

    # -- graph mechanics ---------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def _accum(self, g):
        ga = np.asarray(g, dtype=np.float64)
        gu = _unbroadcast(ga, self.data.shape)
        if self.grad is None:
            # copy when aliasing the caller's buffer; reductions are fresh
            self.grad = gu.copy() if gu is ga else gu
        else:
            self.grad += gu

    def backward(self, grad=None):
        """Reverse traversal from this node, accumulating into `.grad`.

        Accumulation is additive across calls: grads are never zeroed here.
        """
        _EPOCH[0] += 1
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without an explicit gradient requires a scalar")
            grad = np.ones_like(self.data)
        topo, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))
        self._accum(grad)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def detach(self):
        return Tensor(self.data.copy())

    # -- arithmetic --------------------------------------------------------

    def __add__(self, other):
        other = as_tensor(other)
        out = Tensor(self.data + other.data, _parents=(self, other))
        def bwd(g):
            if self.requires_grad:
                self._accum(g)
            if other.requires_grad:
                other._accum(g)
        out._backward = bwd
        return out

    __radd__ = __add__

    def __mul__(self, other):
        other = as_tensor(other)
        out = Tensor(self.data * other.data, _parents=(self, other))
        def bwd(g):
            if self.requires_grad:
                self._accum(g * other.data)
            if other.requires_grad:
                other._accum(g * self.data)
        out._backward = bwd
        return out

    __rmul__ = __mul__

    def __neg__(self):
        return self * (-1.0)

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __truediv__(self, other):
        other = as_tensor(other)
        out = Tensor(self.data / other.data, _parents=(self, other))
        def bwd(g):
            if self.requires_grad:
                self._accum(g / other.data)
            if other.requires_grad:
                other._accum(-g * self.data / (other.data * other.data))
        out._backward = bwd
        return out

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __pow__(self, p):
        assert np.isscalar(p)
        out = Tensor(self.data ** p, _parents=(self,))
        def bwd(g):
            self._accum(g * p * self.data ** (p - 1))
        out._backward = bwd
        return out

    def __matmul__(self, other):
        other = as_tensor(other)
        out = Tensor(self.data @ other.data, _parents=(self, other))
        def bwd(g):
            a, b = self.data, other.data
            if a.ndim == 1 and b.ndim == 1:
                if self.requires_grad:
                    self._accum(g * b)
                if other.requires_grad:
                    other._accum(g * a)
                return
            if b.ndim == 1:
                # (..., m, n) @ (n,) -> (..., m)
                if self.requires_grad:
                    self._accum(_unbroadcast(g[..., :, None] * b, a.shape))
                if other.requires_grad:
                    tmp = g[..., :, None] * a
                    other._accum(tmp.sum(axis=tuple(range(tmp.ndim - 1))))
                return
            if a.ndim == 1:
                # (n,) @ (..., n, p) -> (..., p)
                if self.requires_grad:
                    tmp = b * g[..., None, :]
                    self._accum(tmp.sum(axis=tuple(i for i in range(tmp.ndim) if i != tmp.ndim - 2)))
                if other.requires_grad:
                    other._accum(_unbroadcast(a[:, None] * g[..., None, :], b.shape))
                return
            if self.requires_grad:
                self._accum(_unbroadcast(g @ np.swapaxes(b, -1, -2), a.shape))
            if other.requires_grad:
                other._accum(_unbroadcast(np.swapaxes(a, -1, -2) @ g, b.shape))
        out._backward = bwd
        return out

    # -- elementwise nonlinearities ---------------------------------------

    def exp(self):
        out = Tensor(np.exp(self.data), _parents=(self,))
        out._backward = lambda g: self._accum(g * out.data)
        return out

    def log(self):
        out = Tensor(np.log(self.data), _parents=(self,))
        out._backward = lambda g: self._accum(g / self.data)
        return out

    def sqrt(self):
        out = Tensor(np.sqrt(self.data), _parents=(self,))
        out._backward = lambda g: self._accum(g * 0.5 / out.data)
        return out

    def tanh(self):
        out = Tensor(np.tanh(self.data), _parents=(self,))
        out._backward = lambda g: self._accum(g * (1.0 - out.data * out.data))
        return out

    def sigmoid(self):
        out = Tensor(1.0 / (1.0 + np.exp(-self.data)), _parents=(self,))
        out._backward = lambda g: self._accum(g * out.data * (1.0 - out.data))
        return out

    def relu(self):
        out = Tensor(np.maximum(self.data, 0.0), _parents=(self,))
        out._backward = lambda g: self._accum(g * (self.data > 0.0))
        return out

    def abs(self):
        out = Tensor(np.abs(self.data), _parents=(self,))
        out._backward = lambda g: self._accum(g * np.sign(self.data))
        return out

    def sin(self):
        out = Tensor(np.sin(self.data), _parents=(self,))
        out._backward = lambda g: self._accum(g * np.cos(self.data))
        return out

    def cos(self):
        out = Tensor(np.cos(self.data), _parents=(self,))
        out._backward = lambda g: self._accum(-g * np.sin(self.data))
        return out

    # -- reductions / shape ------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        out = Tensor(self.data.sum(axis=axis, keepdims=keepdims), _parents=(self,))
        def bwd(g):
            if axis is None:
                self._accum(np.broadcast_to(g, self.data.shape))
            else:
                gg = g if keepdims else np.expand_dims(g, axis)
                self._accum(np.broadcast_to(gg, self.data.shape))
        out._backward = bwd
        return out

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else np.prod(
            [self.data.shape[a] for a in (axis if isinstance(axis, tuple) else (axis,))])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out = Tensor(self.data.reshape(shape), _parents=(self,))
        out._backward = lambda g: self._accum(g.reshape(self.data.shape))
        return out

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        if not axes:
            axes = tuple(reversed(range(self.ndim)))
        inv = np.argsort(axes)
        out = Tensor(self.data.transpose(axes), _parents=(self,))
        out._backward = lambda g: self._accum(g.transpose(inv))
        return out

    def swapaxes(self, a, b):
        out = Tensor(np.swapaxes(self.data, a, b), _parents=(self,))
        out._backward = lambda g: self._accum(np.swapaxes(g, a, b))
        return out

    def __getitem__(self, idx):
        out = Tensor(self.data[idx], _parents=(self,))
        def bwd(g):
            full = np.zeros_like(self.data)
            np.add.at(full, idx, g)
            self._accum(full)
        out._backward = bwd
        return out


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def constant(x) -> Tensor:
    return Tensor(np.asarray(x, dtype=np.float64))


def concat(tensors, axis=0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis), _parents=tuple(tensors))
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)
    def bwd(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                t._accum(g[tuple(sl)])
    out._backward = bwd
    return out


def stack(tensors, axis=0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = Tensor(np.stack([t.data for t in tensors], axis=axis), _parents=tuple(tensors))
    def bwd(g):
        for i, t in enumerate(tensors):
            if t.requires_grad:
                t._accum(np.take(g, i, axis=axis))
    out._backward = bwd
    return out


def where(mask, a, b) -> Tensor:
    """Elementwise select with a constant boolean mask."""
    mask = np.asarray(mask, dtype=bool)
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(np.where(mask, a.data, b.data), _parents=(a, b))
    def bwd(g):
        if a.requires_grad:
            a._accum(np.where(mask, g, 0.0))
        if b.requires_grad:
            b._accum(np.where(mask, 0.0, g))
    out._backward = bwd
    return out


def softmax(x: Tensor, axis=-1) -> Tensor:
    shift = np.max(x.data, axis=axis, keepdims=True)  # detached; softmax is shift-invariant
    e = (x - Tensor(shift)).exp()
    return e / e.sum(axis=axis, keepdims=True)


def normalize(x: Tensor, axis=-1, eps=0.0) -> Tensor:
    n = ((x * x).sum(axis=axis, keepdims=True) + eps).sqrt()
    return x / n


def custom_op(inputs, forward_outputs, backward_fn):
    """Wrap an externally computed forward as graph nodes.

    `forward_outputs` is a list of ndarrays; `backward_fn(out_grads)` must
    return one gradient array (or None) per input, in order. Returns a list
    of Tensors, one per output.
    """
    inputs = [as_tensor(t) for t in inputs]
    # A gate node sits between inputs and outputs: every output's consumers
    # run before the output, and all outputs run before the gate, so when the
    # gate's backward fires every output grad is fully accumulated. (Attaching
    # the backward to the outputs directly would be wrong: ordering between
    # one output and another output's consumers is arbitrary.)
    gate = Tensor(np.zeros(()), _parents=tuple(inputs))
    outs = [Tensor(o, _parents=(gate,)) for o in forward_outputs]
    state = {"consumed": [None] * len(outs)}

    def poke(_g):
        gate._accum(np.zeros(()))

    for o in outs:
        o._backward = poke

    def fire(_g):
        # Repeated backward() calls consume grad deltas so that accumulation
        # stays additive.
        filled = []
        dirty = False
        for i, o in enumerate(outs):
            cur = o.grad if o.grad is not None else np.zeros_like(o.data)
            prev = state["consumed"][i]
            delta = cur if prev is None else cur - prev
            state["consumed"][i] = cur.copy()
            if np.any(delta):
                dirty = True
            filled.append(delta)
        if not dirty:
            return
        in_grads = backward_fn(filled)
        for t, ig in zip(inputs, in_grads):
            if ig is not None and t.requires_grad:
                t._accum(ig)

    gate._backward = fire
    return outs
