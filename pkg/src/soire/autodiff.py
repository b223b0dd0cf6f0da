"""A small reverse-mode tape over numpy arrays.

Only the primitives the matching network needs are provided.  Conventions
that matter for reproducibility:

* binary minimum/maximum route the gradient to their first argument on
  ties, and max_reduce routes to the first maximal index;
* sigma01 is the box clamp min(max(x, 0), 1); in "leaky" mode its value
  and derivative use a small slope outside [0, 1] instead of saturating,
  which keeps training gradients alive;
* operations broadcast like numpy, with gradients summed back to each
  operand's shape.

A Graph built with record=False skips the tape entirely and works on raw
arrays, so evaluation and training share one code path.
"""

from __future__ import annotations

import numpy as np


class Node:
    __slots__ = ("value", "grad")

    def __init__(self, value):
        self.value = value
        self.grad = None

    def add_grad(self, g):
        # Callers always pass gradients already shaped like `value`, so the
        # first contribution can be adopted directly (never mutated later).
        if self.grad is None:
            self.grad = np.asarray(g, dtype=float)
        else:
            self.grad = self.grad + g


def _val(x):
    return x.value if isinstance(x, Node) else x


def _unbroadcast(grad, shape):
    """Sum a broadcasted gradient back down to ``shape``."""
    grad = np.asarray(grad, dtype=float)
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _shape(x):
    return np.shape(_val(x))


class Graph:
    """Operation namespace; records a tape when ``record`` is true."""

    def __init__(self, mode: str = "exact", slope: float = 0.01, record: bool = False):
        if mode not in ("exact", "leaky"):
            raise ValueError(f"unknown mode {mode!r}")
        self.mode = mode
        self.slope = slope
        self.record = record
        self._tape: list = []

    # -- infrastructure ---------------------------------------------------

    def leaf(self, value) -> Node:
        """A differentiable input (always a Node, even when not recording)."""
        return Node(np.asarray(value, dtype=float))

    def _want(self, *args) -> bool:
        return self.record and any(isinstance(a, Node) for a in args)

    def _emit(self, value, backward) -> Node:
        out = Node(value)
        self._tape.append((out, backward))
        return out

    def backward(self, out: Node, seed=1.0):
        """Backpropagate from ``out`` through every recorded operation."""
        out.add_grad(np.asarray(seed, dtype=float))
        for node, fn in reversed(self._tape):
            if node.grad is not None:
                fn(node.grad)

    # -- arithmetic --------------------------------------------------------

    def add(self, a, b):
        value = _val(a) + _val(b)
        if not (self.record and (isinstance(a, Node) or isinstance(b, Node))):
            return value

        def backward(g):
            if isinstance(a, Node):
                a.add_grad(_unbroadcast(g, _shape(a)))
            if isinstance(b, Node):
                b.add_grad(_unbroadcast(g, _shape(b)))

        return self._emit(value, backward)

    def add_n(self, items):
        items = list(items)
        total = _val(items[0])
        for it in items[1:]:
            total = total + _val(it)
        if not self._want(*items):
            return total

        def backward(g):
            for it in items:
                if isinstance(it, Node):
                    it.add_grad(_unbroadcast(g, _shape(it)))

        return self._emit(total, backward)

    def sub(self, a, b):
        value = _val(a) - _val(b)
        if not (self.record and (isinstance(a, Node) or isinstance(b, Node))):
            return value

        def backward(g):
            if isinstance(a, Node):
                a.add_grad(_unbroadcast(g, _shape(a)))
            if isinstance(b, Node):
                b.add_grad(_unbroadcast(-g, _shape(b)))

        return self._emit(value, backward)

    def mul(self, a, b):
        va, vb = _val(a), _val(b)
        value = va * vb
        if not (self.record and (isinstance(a, Node) or isinstance(b, Node))):
            return value

        def backward(g):
            if isinstance(a, Node):
                a.add_grad(_unbroadcast(g * vb, _shape(a)))
            if isinstance(b, Node):
                b.add_grad(_unbroadcast(g * va, _shape(b)))

        return self._emit(value, backward)

    def sum(self, x, axis=None):
        vx = _val(x)
        value = np.sum(vx, axis=axis)
        if not (self.record and isinstance(x, Node)):
            return value
        shape = np.shape(vx)

        def backward(g):
            if axis is None:
                x.add_grad(np.broadcast_to(g, shape).astype(float))
            else:
                x.add_grad(np.broadcast_to(np.expand_dims(g, axis), shape).astype(float))

        return self._emit(value, backward)

    def mean(self, x):
        vx = _val(x)
        n = np.size(vx)
        value = float(np.mean(vx)) if n else 0.0
        if not (self.record and isinstance(x, Node)):
            return value
        shape = np.shape(vx)

        def backward(g):
            x.add_grad(np.full(shape, g / n))

        return self._emit(value, backward)

    # -- clamps ------------------------------------------------------------

    def _sigma01_value(self, x):
        if self.mode == "exact":
            return np.clip(x, 0.0, 1.0)
        s = self.slope
        return np.where(x < 0.0, s * x, np.where(x > 1.0, 1.0 + s * (x - 1.0), x))

    def _sigma01_deriv(self, x):
        inside = (x >= 0.0) & (x <= 1.0)
        if self.mode == "exact":
            return inside.astype(float)
        return np.where(inside, 1.0, self.slope)

    def sigma01(self, x):
        vx = _val(x)
        value = self._sigma01_value(vx)
        if not (self.record and isinstance(x, Node)):
            return value

        def backward(g):
            x.add_grad(g * self._sigma01_deriv(vx))

        return self._emit(value, backward)

    def relu(self, x):
        vx = _val(x)
        value = np.maximum(vx, 0.0)
        if not (self.record and isinstance(x, Node)):
            return value

        def backward(g):
            x.add_grad(g * (vx > 0.0).astype(float))

        return self._emit(value, backward)

    # -- min/max -----------------------------------------------------------

    def minimum(self, a, b):
        va, vb = _val(a), _val(b)
        take_a = va <= vb  # ties go to the first argument
        value = np.where(take_a, va, vb)
        if not (self.record and (isinstance(a, Node) or isinstance(b, Node))):
            return value

        def backward(g):
            if isinstance(a, Node):
                a.add_grad(_unbroadcast(g * take_a, _shape(a)))
            if isinstance(b, Node):
                b.add_grad(_unbroadcast(g * ~take_a, _shape(b)))

        return self._emit(value, backward)

    def maximum(self, a, b):
        va, vb = _val(a), _val(b)
        take_a = va >= vb
        value = np.where(take_a, va, vb)
        if not (self.record and (isinstance(a, Node) or isinstance(b, Node))):
            return value

        def backward(g):
            if isinstance(a, Node):
                a.add_grad(_unbroadcast(g * take_a, _shape(a)))
            if isinstance(b, Node):
                b.add_grad(_unbroadcast(g * ~take_a, _shape(b)))

        return self._emit(value, backward)

    def max_reduce(self, x, axis: int):
        vx = _val(x)
        value = np.max(vx, axis=axis)
        if not (self.record and isinstance(x, Node)):
            return value
        idx = np.expand_dims(np.argmax(vx, axis=axis), axis)  # first maximum

        def backward(g):
            gx = np.zeros_like(vx, dtype=float)
            np.put_along_axis(gx, idx, np.expand_dims(g, axis), axis)
            x.add_grad(gx)

        return self._emit(value, backward)

    # -- structure ---------------------------------------------------------

    def stack(self, items, axis: int = 0):
        items = list(items)
        vals = [np.asarray(_val(it), dtype=float) for it in items]
        value = np.stack(vals, axis=axis)
        if not self._want(*items):
            return value

        def backward(g):
            pieces = np.split(g, len(items), axis=axis)
            for it, piece in zip(items, pieces):
                if isinstance(it, Node):
                    it.add_grad(piece.squeeze(axis=axis))

        return self._emit(value, backward)

    def concat(self, items, axis: int = 0):
        items = list(items)
        vals = [np.asarray(_val(it), dtype=float) for it in items]
        value = np.concatenate(vals, axis=axis)
        if not self._want(*items):
            return value
        sizes = [v.shape[axis] for v in vals]
        bounds = np.cumsum(sizes)[:-1]

        def backward(g):
            for it, piece in zip(items, np.split(g, bounds, axis=axis)):
                if isinstance(it, Node):
                    it.add_grad(piece)

        return self._emit(value, backward)

    def reshape(self, x, shape):
        vx = _val(x)
        value = np.reshape(vx, shape)
        if not (self.record and isinstance(x, Node)):
            return value
        orig = np.shape(vx)

        def backward(g):
            x.add_grad(np.reshape(g, orig))

        return self._emit(value, backward)

    def getitem(self, x, index):
        vx = _val(x)
        value = np.asarray(vx)[index]
        if not (self.record and isinstance(x, Node)):
            return value
        shape = np.shape(vx)

        def backward(g):
            gx = np.zeros(shape, dtype=float)
            np.add.at(gx, index, g)
            x.add_grad(gx)

        return self._emit(value, backward)

    def index_update(self, x, index, v):
        """Functional write: a copy of x with x[index] = v."""
        vx = np.array(_val(x), dtype=float, copy=True)
        vx[index] = _val(v)
        if not self._want(x, v):
            return vx

        def backward(g):
            if isinstance(x, Node):
                gx = np.array(g, dtype=float, copy=True)
                gx[index] = 0.0
                x.add_grad(gx)
            if isinstance(v, Node):
                v.add_grad(_unbroadcast(np.asarray(g)[index], _shape(v)))

        return self._emit(vx, backward)

    def flag_agreement(self, rho_t, rho_stack, presence):
        """Fused soft flag: 1 - s01(sum_a s01(m_a + rho_t_a - rho'_a - 1)).

        presence is a constant 0/1 array (..., n_symbols); rho_t has shape
        (n_symbols,) and rho_stack (K, n_symbols), one row per comparison
        target.  Returns shape (..., K).  Fusing keeps only small int8
        region codes alive on the tape.
        """
        v_rho_t = np.asarray(_val(rho_t), dtype=float)
        v_stack = np.asarray(_val(rho_stack), dtype=float)
        diff = v_rho_t[None, :] - v_stack  # (K, S)
        x = presence[..., None, :] + diff - 1.0  # (..., K, S)
        inner = self._sigma01_value(x)
        s = inner.sum(axis=-1)  # (..., K)
        value = 1.0 - self._sigma01_value(s)
        if not self._want(rho_t, rho_stack):
            return value
        # Keep only int8 in-box masks alive on the tape; the big float
        # intermediates are recomputed from them at backward time.
        x_in = ((x >= 0.0) & (x <= 1.0)).astype(np.int8)
        s_in = ((s >= 0.0) & (s <= 1.0)).astype(np.int8)
        outside = 0.0 if self.mode == "exact" else self.slope

        def backward(g):
            ds = np.where(s_in, 1.0, outside)
            dx = np.where(x_in, 1.0, outside)
            ginner = (-g * ds)[..., None] * dx  # (..., K, S)
            flat = ginner.reshape(-1, v_stack.shape[0], v_stack.shape[1]).sum(axis=0)
            if isinstance(rho_t, Node):
                rho_t.add_grad(flat.sum(axis=0))
            if isinstance(rho_stack, Node):
                rho_stack.add_grad(-flat)

        return self._emit(value, backward)
