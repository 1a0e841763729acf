"""Reverse-mode differentiation on an explicit tape.

Values are float64 numpy arrays.  A :class:`Tape` records a linear program of
ops (each node's parents have smaller ids), and :meth:`Tape.backward` walks it
once in reverse, accumulating vector-Jacobian products in descending node-id
order.  That fixed order, plus numpy's fixed reduction order, makes gradients
bit-reproducible run to run in single-threaded use.

The convolution kernels are shared with the no-grad fast path in
``models.predict_logits``: ``conv2d_forward`` can skip building the backward
context when only the output is needed.

Kink conventions (documented, deterministic): relu'(x)=0 for x<=0; clip passes
gradient only strictly inside [lo, hi]; 2x2 max-pool routes gradient to the
first maximal element in row-major window order.
"""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np

from .errors import ContractError, ShapeError

Array = np.ndarray


def _as64(x) -> Array:
    return np.asarray(x, dtype=np.float64)


# ---------------------------------------------------------------------------
# Functional kernels (also used without a tape)
# ---------------------------------------------------------------------------

def conv_output_size(size: int, k: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - k) // stride + 1


def _im2col(xp: Array, kh: int, kw: int, stride: int, ho: int, wo: int) -> Array:
    """(B, C, Hp, Wp) -> (B*ho*wo, C*kh*kw) patch matrix."""
    b, c = xp.shape[0], xp.shape[1]
    cols = np.empty((b, c, kh, kw, ho, wo), dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, i:i + ho * stride:stride, j:j + wo * stride:stride]
    return cols.transpose(0, 4, 5, 1, 2, 3).reshape(b * ho * wo, c * kh * kw)


def _col2im(dcols: Array, xshape, kh: int, kw: int, stride: int, padding: int,
            ho: int, wo: int) -> Array:
    """Scatter-add the im2col adjoint back to input layout."""
    b, c, h, w = xshape
    dxp = np.zeros((b, c, h + 2 * padding, w + 2 * padding), dtype=np.float64)
    dc = dcols.reshape(b, ho, wo, c, kh, kw).transpose(0, 3, 4, 5, 1, 2)
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i:i + ho * stride:stride, j:j + wo * stride:stride] += dc[:, :, i, j]
    if padding:
        return dxp[:, :, padding:-padding, padding:-padding]
    return dxp


def conv2d_forward(x: Array, w: Array, b: Array, stride: int, padding: int,
                   want_ctx: bool = True):
    """Cross-correlation plus bias; returns (output, ctx) with ctx=None when skipped."""
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d expects 4-d input and kernel, got {x.shape} and {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise ShapeError(f"conv2d channel mismatch: input {x.shape[1]} vs kernel {w.shape[1]}")
    if b.shape != (w.shape[0],):
        raise ShapeError(f"conv2d bias shape {b.shape} != ({w.shape[0]},)")
    if stride < 1 or padding < 0:
        raise ShapeError(f"conv2d needs stride >= 1 and padding >= 0, got {stride}, {padding}")
    bsz, _, h, wd = x.shape
    out_ch, _, kh, kw = w.shape
    ho = conv_output_size(h, kh, stride, padding)
    wo = conv_output_size(wd, kw, stride, padding)
    if ho <= 0 or wo <= 0:
        raise ShapeError(f"conv2d output size {ho}x{wo} not positive for input {h}x{wd}")
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x
    mat = _im2col(xp, kh, kw, stride, ho, wo)
    y = mat @ w.reshape(out_ch, -1).T + b
    y = y.reshape(bsz, ho, wo, out_ch).transpose(0, 3, 1, 2)
    ctx = (mat, x.shape, (kh, kw, stride, padding, ho, wo)) if want_ctx else None
    return np.ascontiguousarray(y), ctx


def conv2d_backward(dy: Array, w: Array, ctx, need_dx: bool, need_dw: bool):
    mat, xshape, (kh, kw, stride, padding, ho, wo) = ctx
    out_ch = w.shape[0]
    dy_mat = dy.transpose(0, 2, 3, 1).reshape(-1, out_ch)
    dx = dw = db = None
    if need_dw:
        dw = (dy_mat.T @ mat).reshape(w.shape)
        db = dy_mat.sum(axis=0)
    if need_dx:
        dcols = dy_mat @ w.reshape(out_ch, -1)
        dx = _col2im(dcols, xshape, kh, kw, stride, padding, ho, wo)
    return dx, dw, db


def maxpool2_forward(x: Array, want_ctx: bool = True):
    if x.ndim != 4:
        raise ShapeError(f"max-pool expects 4-d input, got {x.shape}")
    b, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"2x2 max-pool needs even spatial dims, got {h}x{w}")
    win = x.reshape(b, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(
        b, c, h // 2, w // 2, 4)
    if not want_ctx:
        return win.max(axis=-1), None
    arg = win.argmax(axis=-1)  # first max in row-major window order
    y = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
    return y, (x.shape, arg)


def maxpool2_backward(dy: Array, ctx) -> Array:
    (b, c, h, w), arg = ctx
    dwin = np.zeros((b, c, h // 2, w // 2, 4), dtype=np.float64)
    np.put_along_axis(dwin, arg[..., None], dy[..., None], axis=-1)
    return dwin.reshape(b, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(
        b, c, h, w)


def dense_forward(x: Array, w: Array, b: Array) -> Array:
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[1]:
        raise ShapeError(f"dense shapes incompatible: x {x.shape}, w {w.shape}")
    if b.shape != (w.shape[0],):
        raise ShapeError(f"dense bias shape {b.shape} != ({w.shape[0]},)")
    return x @ w.T + b


def log_softmax(logits: Array) -> Array:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def cross_entropy_forward(logits: Array, labels) -> Array:
    """Per-example -log softmax(logits)[label]; logits (B, K) or (K,)."""
    l2 = logits.reshape(1, -1) if logits.ndim == 1 else logits
    lab = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if lab.shape[0] != l2.shape[0]:
        raise ShapeError(f"{lab.shape[0]} labels for batch of {l2.shape[0]}")
    k = l2.shape[1]
    if np.any(lab < 0) or np.any(lab >= k):
        raise IndexError(f"label out of range for {k} classes")
    return -log_softmax(l2)[np.arange(l2.shape[0]), lab]


# ---------------------------------------------------------------------------
# Tape
# ---------------------------------------------------------------------------

class _Node:
    __slots__ = ("op", "parents", "value", "vjp", "needs_grad", "aux")

    def __init__(self, op: str, parents: tuple, value: Array,
                 vjp: Optional[Callable], needs_grad: bool, aux=None):
        self.op = op
        self.parents = parents
        self.value = value
        self.vjp = vjp
        self.needs_grad = needs_grad
        self.aux = aux


class Var:
    """Handle to one tape node; carries the forward value."""

    __slots__ = ("tape", "id")

    def __init__(self, tape: "Tape", node_id: int):
        self.tape = tape
        self.id = node_id

    @property
    def value(self) -> Array:
        return self.tape.nodes[self.id].value

    @property
    def shape(self):
        return self.value.shape

    def __add__(self, other: "Var") -> "Var":
        return self.tape.add(self, other)

    def __sub__(self, other: "Var") -> "Var":
        return self.tape.sub(self, other)

    def __mul__(self, other) -> "Var":
        if isinstance(other, Var):
            return self.tape.mul(self, other)
        return self.tape.smul(self, float(other))

    __rmul__ = __mul__


class Tape:
    """Single-use record of a differentiable computation."""

    def __init__(self):
        self.nodes: list[_Node] = []

    # -- construction ------------------------------------------------------

    def _push(self, op, parents, value, vjp, needs_grad, aux=None) -> Var:
        self.nodes.append(_Node(op, parents, value, vjp, needs_grad, aux))
        return Var(self, len(self.nodes) - 1)

    def leaf(self, value, needs_grad: bool = True) -> Var:
        return self._push("leaf", (), _as64(value), None, needs_grad)

    def _unary(self, op, a: Var, value, vjp_fn, aux=None) -> Var:
        node = self.nodes[a.id]
        return self._push(op, (a.id,), value,
                          (lambda g: (vjp_fn(g),)) if node.needs_grad else None,
                          node.needs_grad, aux)

    def _check_same_shape(self, op, a: Var, b: Var):
        if a.value.shape != b.value.shape:
            raise ShapeError(f"{op}: shape mismatch {a.value.shape} vs {b.value.shape}")

    # -- elementwise and shape ops ----------------------------------------

    def add(self, a: Var, b: Var) -> Var:
        self._check_same_shape("add", a, b)
        return self._push("add", (a.id, b.id), a.value + b.value,
                          lambda g: (g, g), self._any_grad(a, b))

    def sub(self, a: Var, b: Var) -> Var:
        self._check_same_shape("sub", a, b)
        return self._push("sub", (a.id, b.id), a.value - b.value,
                          lambda g: (g, -g), self._any_grad(a, b))

    def mul(self, a: Var, b: Var) -> Var:
        self._check_same_shape("mul", a, b)
        av, bv = a.value, b.value
        return self._push("mul", (a.id, b.id), av * bv,
                          lambda g: (g * bv, g * av), self._any_grad(a, b))

    def smul(self, a: Var, c: float) -> Var:
        return self._unary("smul", a, a.value * c, lambda g: g * c)

    def relu(self, a: Var) -> Var:
        mask = a.value > 0.0
        return self._unary("relu", a, np.where(mask, a.value, 0.0), lambda g: g * mask)

    def clip(self, a: Var, lo: float, hi: float) -> Var:
        inside = (a.value > lo) & (a.value < hi)
        return self._unary("clip", a, np.clip(a.value, lo, hi), lambda g: g * inside)

    def flatten(self, a: Var) -> Var:
        shape = a.value.shape
        flat = a.value.reshape(shape[0], -1)
        return self._unary("flatten", a, flat, lambda g: g.reshape(shape))

    def sum(self, a: Var) -> Var:
        shape = a.value.shape
        return self._unary("sum", a, np.asarray(a.value.sum()),
                           lambda g: np.broadcast_to(g, shape).copy())

    def mean(self, a: Var) -> Var:
        shape = a.value.shape
        n = a.value.size
        return self._unary("mean", a, np.asarray(a.value.mean()),
                           lambda g: np.broadcast_to(g / n, shape).copy())

    # -- network ops -------------------------------------------------------

    def maxpool2(self, a: Var) -> Var:
        y, ctx = maxpool2_forward(a.value, want_ctx=self.nodes[a.id].needs_grad)
        return self._unary("maxpool2", a, y, lambda g: maxpool2_backward(g, ctx))

    def conv2d(self, x: Var, w: Var, b: Var, stride: int = 1, padding: int = 0) -> Var:
        need_dx = self.nodes[x.id].needs_grad
        need_dw = self.nodes[w.id].needs_grad or self.nodes[b.id].needs_grad
        y, ctx = conv2d_forward(x.value, w.value, b.value, stride, padding,
                                want_ctx=need_dx or need_dw)
        wv = w.value

        def vjp(g):
            dx, dw, db = conv2d_backward(g, wv, ctx, need_dx, need_dw)
            return dx, dw, db

        return self._push("conv2d", (x.id, w.id, b.id), y,
                          vjp if (need_dx or need_dw) else None, need_dx or need_dw)

    def dense(self, x: Var, w: Var, b: Var) -> Var:
        y = dense_forward(x.value, w.value, b.value)
        xv, wv = x.value, w.value
        return self._push("dense", (x.id, w.id, b.id), y,
                          lambda g: (g @ wv, g.T @ xv, g.sum(axis=0)),
                          self._any_grad(x, w, b))

    def cross_entropy(self, logits: Var, labels, reduction: str = "mean") -> Var:
        """Stable softmax cross-entropy; per-example losses kept on the node."""
        lv = logits.value
        l2 = lv.reshape(1, -1) if lv.ndim == 1 else lv
        per_example = cross_entropy_forward(lv, labels)
        lab = np.atleast_1d(np.asarray(labels, dtype=np.int64))
        if reduction == "mean":
            value = per_example.mean()
            scale = 1.0 / l2.shape[0]
        elif reduction == "sum":
            value = per_example.sum()
            scale = 1.0
        else:
            raise ContractError(f"unknown reduction {reduction!r}")
        probs = np.exp(log_softmax(l2))

        def vjp(g):
            d = probs.copy()
            d[np.arange(l2.shape[0]), lab] -= 1.0
            d *= float(g) * scale
            return (d.reshape(lv.shape),)

        node = self._push("cross_entropy", (logits.id,), np.asarray(value),
                          vjp if self.nodes[logits.id].needs_grad else None,
                          self.nodes[logits.id].needs_grad, aux=per_example)
        return node

    def per_example_losses(self, ce: Var) -> Array:
        node = self.nodes[ce.id]
        if node.op != "cross_entropy":
            raise ContractError("per-example losses only recorded on cross-entropy nodes")
        return node.aux

    # -- backward ----------------------------------------------------------

    def _any_grad(self, *vars_) -> bool:
        return any(self.nodes[v.id].needs_grad for v in vars_)

    def backward(self, root: Var) -> dict[int, Array]:
        """Gradients of a scalar root w.r.t. every gradient-bearing leaf.

        Returns {node id -> gradient array}; leaves never reached by the
        sweep get explicit zeros.  Each node's vjp runs exactly once, in
        descending node-id order.
        """
        rnode = self.nodes[root.id]
        if rnode.value.size != 1:
            raise ContractError(f"backward root must be scalar, got shape {rnode.value.shape}")
        grads: dict[int, Array] = {root.id: np.ones_like(rnode.value)}
        for nid in range(root.id, -1, -1):
            node = self.nodes[nid]
            g = grads.get(nid)
            if g is None or node.vjp is None:
                continue
            parent_grads = node.vjp(g)
            for pid, pg in zip(node.parents, parent_grads):
                if pg is None or not self.nodes[pid].needs_grad:
                    continue
                if pid in grads:
                    grads[pid] = grads[pid] + pg
                else:
                    grads[pid] = pg
        for nid, node in enumerate(self.nodes):
            if node.op == "leaf" and node.needs_grad and nid not in grads:
                grads[nid] = np.zeros_like(node.value)
        return grads
