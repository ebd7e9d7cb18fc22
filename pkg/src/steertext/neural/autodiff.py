"""Reverse-mode differentiation over a fixed set of dense numpy ops.

The two model graphs in this project are static, so instead of a general
autodiff system we record a tape of ~10 op kinds and replay it backwards.
Every op validates shapes up front and checks its output for NaN/Inf.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable

import numpy as np


class ShapeError(ValueError):
    """Operand shapes are inconsistent for the requested op."""


class NonFiniteError(FloatingPointError):
    """An op produced NaN or Inf."""


# Finite checks are cheap relative to the matmuls at this scale; keep them on
# everywhere so divergence is caught at the op that produced it.
CHECK_FINITE = True


def _guard(op: str, out: np.ndarray) -> None:
    if CHECK_FINITE and not np.all(np.isfinite(out)):
        raise NonFiniteError(f"non-finite values produced by op '{op}'")


class Node:
    """One tape entry: a value, its parents, and a backward closure."""

    __slots__ = ("value", "grad", "parents", "backward_fn", "op", "leaf_name")

    def __init__(
        self,
        value: np.ndarray,
        parents: tuple["Node", ...] = (),
        backward_fn: Callable[[np.ndarray], tuple[np.ndarray, ...]] | None = None,
        op: str = "leaf",
        leaf_name: str | None = None,
    ):
        self.value = value
        self.grad: np.ndarray | None = None
        self.parents = parents
        self.backward_fn = backward_fn
        self.op = op
        self.leaf_name = leaf_name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape


def _topo_order(root: Node) -> list[Node]:
    order: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Node) -> dict[str, np.ndarray]:
    """Accumulate d(loss)/d(leaf) for every named leaf reachable from loss.

    The loss must be scalar. Returns leaf name -> gradient array.
    """
    if loss.value.ndim != 0:
        raise ShapeError(f"backward requires a scalar loss, got shape {loss.value.shape}")
    order = _topo_order(loss)
    for node in order:
        node.grad = None
    loss.grad = np.ones_like(loss.value)
    grads: dict[str, np.ndarray] = {}
    for node in reversed(order):
        if node.grad is None:
            continue
        if node.leaf_name is not None:
            acc = grads.get(node.leaf_name)
            grads[node.leaf_name] = node.grad if acc is None else acc + node.grad
        if node.backward_fn is None:
            continue
        parent_grads = node.backward_fn(node.grad)
        for parent, g in zip(node.parents, parent_grads):
            if g is None:
                continue
            if parent.grad is None:
                parent.grad = g
            else:
                parent.grad = parent.grad + g
    return grads


# ---------------------------------------------------------------------------
# ops
# ---------------------------------------------------------------------------

def const(value: np.ndarray) -> Node:
    return Node(np.asarray(value), op="const")


def leaf(value: np.ndarray, name: str) -> Node:
    return Node(value, op="leaf", leaf_name=name)


def add(a: Node, b: Node) -> Node:
    """Elementwise a + b; b may broadcast as a trailing-row bias."""
    out = a.value + b.value
    _guard("add", out)

    def bwd(g):
        return _unbroadcast(g, a.value.shape), _unbroadcast(g, b.value.shape)

    return Node(out, (a, b), bwd, op="add")


def sub(a: Node, b: Node) -> Node:
    out = a.value - b.value
    _guard("sub", out)

    def bwd(g):
        return _unbroadcast(g, a.value.shape), _unbroadcast(-g, b.value.shape)

    return Node(out, (a, b), bwd, op="sub")


def scale(a: Node, s: float) -> Node:
    out = a.value * s
    _guard("scale", out)
    return Node(out, (a,), lambda g: (g * s,), op="scale")


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum g down to `shape` (inverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def matmul(a: Node, b: Node) -> Node:
    if a.value.ndim != 2 or b.value.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} @ {b.shape}")
    if a.value.shape[1] != b.value.shape[0]:
        raise ShapeError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    out = a.value @ b.value
    _guard("matmul", out)

    def bwd(g):
        return g @ b.value.T, a.value.T @ g

    return Node(out, (a, b), bwd, op="matmul")


def embedding(table: Node, ids: np.ndarray) -> Node:
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim != 1:
        raise ShapeError(f"embedding ids must be 1-D, got {ids.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.value.shape[0]):
        raise ShapeError("embedding id out of range")
    out = table.value[ids]
    _guard("embedding", out)

    def bwd(g):
        dt = np.zeros_like(table.value)
        np.add.at(dt, ids, g)
        return (dt,)

    return Node(out, (table,), bwd, op="embedding")


def take_rows(x: Node, idx: np.ndarray) -> Node:
    idx = np.asarray(idx, dtype=np.int64)
    out = x.value[idx]
    _guard("take_rows", out)

    def bwd(g):
        dx = np.zeros_like(x.value)
        np.add.at(dx, idx, g)
        return (dx,)

    return Node(out, (x,), bwd, op="take_rows")


def assemble_rows(sources: list[Node], src_of_row: np.ndarray, idx_in_src: np.ndarray) -> Node:
    """Build a row matrix where row j = sources[src_of_row[j]][idx_in_src[j]].

    Used to interleave token rows with inserted condition rows while keeping
    gradients routed back to each source.
    """
    src_of_row = np.asarray(src_of_row, dtype=np.int64)
    idx_in_src = np.asarray(idx_in_src, dtype=np.int64)
    if src_of_row.shape != idx_in_src.shape or src_of_row.ndim != 1:
        raise ShapeError("assemble_rows index arrays must be equal-length 1-D")
    width = sources[0].value.shape[1]
    for s in sources:
        if s.value.ndim != 2 or s.value.shape[1] != width:
            raise ShapeError("assemble_rows sources must share their row width")
    out = np.empty((src_of_row.size, width), dtype=sources[0].value.dtype)
    for si, s in enumerate(sources):
        mask = src_of_row == si
        out[mask] = s.value[idx_in_src[mask]]
    _guard("assemble_rows", out)

    def bwd(g):
        grads = []
        for si, s in enumerate(sources):
            ds = np.zeros_like(s.value)
            mask = src_of_row == si
            np.add.at(ds, idx_in_src[mask], g[mask])
            grads.append(ds)
        return tuple(grads)

    return Node(out, tuple(sources), bwd, op="assemble_rows")


def layer_norm(x: Node, gamma: Node, beta: Node, eps: float = 1e-5) -> Node:
    xv = x.value
    mu = xv.mean(axis=-1, keepdims=True)
    xc = xv - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gamma.value + beta.value
    _guard("layer_norm", out)

    def bwd(g):
        dgamma = (g * xhat).sum(axis=0)
        dbeta = g.sum(axis=0)
        dxhat = g * gamma.value
        m1 = dxhat.mean(axis=-1, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
        dx = inv * (dxhat - m1 - xhat * m2)
        return dx, dgamma, dbeta

    return Node(out, (x, gamma, beta), bwd, op="layer_norm")


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(x: Node) -> Node:
    xv = x.value
    u = _GELU_C * (xv + 0.044715 * xv**3)
    t = np.tanh(u)
    out = 0.5 * xv * (1.0 + t)
    _guard("gelu", out)

    def bwd(g):
        du = _GELU_C * (1.0 + 3 * 0.044715 * xv**2)
        dx = 0.5 * (1.0 + t) + 0.5 * xv * (1.0 - t * t) * du
        return (g * dx,)

    return Node(out, (x,), bwd, op="gelu")


def attention(
    x: Node,
    wqkv: Node,
    bqkv: Node,
    wo: Node,
    bo: Node,
    n_heads: int,
    causal: bool,
) -> Node:
    """Fused multi-head self-attention over a [T, D] sequence."""
    T, D = x.value.shape
    if D % n_heads != 0:
        raise ShapeError(f"width {D} not divisible by {n_heads} heads")
    if wqkv.value.shape != (D, 3 * D):
        raise ShapeError(f"wqkv shape {wqkv.value.shape} != {(D, 3 * D)}")
    hd = D // n_heads
    inv_sqrt = 1.0 / math.sqrt(hd)

    qkv = x.value @ wqkv.value + bqkv.value
    q, k, v = np.split(qkv, 3, axis=1)

    def heads(m):
        return m.reshape(T, n_heads, hd).transpose(1, 0, 2)  # [H, T, hd]

    qh, kh, vh = heads(q), heads(k), heads(v)
    scores = np.matmul(qh, kh.transpose(0, 2, 1)) * inv_sqrt  # [H, T, T]
    if causal:
        mask = np.triu(np.ones((T, T), dtype=bool), k=1)
        scores = np.where(mask, -np.inf, scores)
    smax = scores.max(axis=-1, keepdims=True)
    p = np.exp(scores - smax)
    p /= p.sum(axis=-1, keepdims=True)
    oh = np.matmul(p, vh)  # [H, T, hd]
    o = oh.transpose(1, 0, 2).reshape(T, D)
    out = o @ wo.value + bo.value
    _guard("attention", out)

    def bwd(g):
        dwo = o.T @ g
        dbo = g.sum(axis=0)
        do = (g @ wo.value.T).reshape(T, n_heads, hd).transpose(1, 0, 2)
        dp = np.matmul(do, vh.transpose(0, 2, 1))
        dvh = np.matmul(p.transpose(0, 2, 1), do)
        ds = (dp - (dp * p).sum(axis=-1, keepdims=True)) * p
        dqh = np.matmul(ds, kh) * inv_sqrt
        dkh = np.matmul(ds.transpose(0, 2, 1), qh) * inv_sqrt

        def unheads(m):
            return m.transpose(1, 0, 2).reshape(T, D)

        dqkv = np.concatenate([unheads(dqh), unheads(dkh), unheads(dvh)], axis=1)
        dwqkv = x.value.T @ dqkv
        dbqkv = dqkv.sum(axis=0)
        dx = dqkv @ wqkv.value.T
        return dx, dwqkv, dbqkv, dwo, dbo

    return Node(out, (x, wqkv, bqkv, wo, bo), bwd, op="attention")


def softmax_cross_entropy(
    logits: Node,
    targets: np.ndarray,
    ignore: np.ndarray | None = None,
) -> Node:
    """Mean negative log-likelihood over non-ignored rows.

    `targets` holds a class id per row; rows where `ignore` is True contribute
    exactly zero to both the loss and the gradient.
    """
    targets = np.asarray(targets, dtype=np.int64)
    N, V = logits.value.shape
    if targets.shape != (N,):
        raise ShapeError(f"targets shape {targets.shape} != ({N},)")
    kept = np.ones(N, dtype=bool) if ignore is None else ~np.asarray(ignore, dtype=bool)
    n_kept = int(kept.sum())
    if n_kept == 0:
        raise ShapeError("softmax_cross_entropy: every row is ignored")

    lmax = logits.value.max(axis=1, keepdims=True)
    z = logits.value - lmax
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - lse
    rows = np.arange(N)
    out = np.asarray(-logp[rows[kept], targets[kept]].sum() / n_kept)
    _guard("softmax_cross_entropy", out)

    def bwd(g):
        dlogits = np.exp(logp)
        dlogits[rows, targets] -= 1.0
        dlogits[~kept] = 0.0
        return (dlogits * (g / n_kept),)

    return Node(out, (logits,), bwd, op="softmax_cross_entropy")


def weighted_rows_sumsq(x: Node, weights: np.ndarray) -> Node:
    """sum_n weights[n] * ||x[n]||^2, as a scalar node."""
    weights = np.asarray(weights, dtype=x.value.dtype)
    if weights.shape != (x.value.shape[0],):
        raise ShapeError(f"weights shape {weights.shape} != ({x.value.shape[0]},)")
    out = np.asarray((weights * (x.value * x.value).sum(axis=1)).sum())
    _guard("weighted_rows_sumsq", out)

    def bwd(g):
        return (2.0 * g * weights[:, None] * x.value,)

    return Node(out, (x,), bwd, op="weighted_rows_sumsq")


def sumsq(x: Node) -> Node:
    out = np.asarray((x.value * x.value).sum())
    _guard("sumsq", out)
    return Node(out, (x,), lambda g: (2.0 * g * x.value,), op="sumsq")


def reshape(x: Node, shape: tuple[int, ...]) -> Node:
    out = x.value.reshape(shape)
    old = x.value.shape
    return Node(out, (x,), lambda g: (g.reshape(old),), op="reshape")


def row_normalize(x: Node, eps: float = 1e-9) -> Node:
    """Scale every row of a matrix to unit L2 norm (eps-floored)."""
    norms = np.sqrt((x.value * x.value).sum(axis=1, keepdims=True))
    safe = np.maximum(norms, eps)
    out = x.value / safe
    _guard("row_normalize", out)

    def bwd(g):
        dot = (g * out).sum(axis=1, keepdims=True)
        return ((g - out * dot) / safe,)

    return Node(out, (x,), bwd, op="row_normalize")


def linear(x: Node, w: Node, b: Node) -> Node:
    return add(matmul(x, w), b)
