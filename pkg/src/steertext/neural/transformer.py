"""Pre-norm transformer blocks shared by both trained components."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .store import Graph, ParamStore


def init_stack(
    store: ParamStore,
    prefix: str,
    width: int,
    n_layers: int,
    rng: np.random.Generator,
    mlp_ratio: int = 4,
    init_std: float = 0.02,
) -> None:
    """Register ln/attention/mlp parameters for `n_layers` blocks."""
    def normal(*shape, std=init_std):
        return rng.normal(0.0, std, size=shape)

    proj_std = init_std / np.sqrt(2.0 * n_layers)
    hidden = mlp_ratio * width
    for i in range(n_layers):
        p = f"{prefix}.h{i}"
        store.add(f"{p}.ln1.g", np.ones(width))
        store.add(f"{p}.ln1.b", np.zeros(width))
        store.add(f"{p}.attn.wqkv", normal(width, 3 * width))
        store.add(f"{p}.attn.bqkv", np.zeros(3 * width))
        store.add(f"{p}.attn.wo", normal(width, width, std=proj_std))
        store.add(f"{p}.attn.bo", np.zeros(width))
        store.add(f"{p}.ln2.g", np.ones(width))
        store.add(f"{p}.ln2.b", np.zeros(width))
        store.add(f"{p}.mlp.w1", normal(width, hidden))
        store.add(f"{p}.mlp.b1", np.zeros(hidden))
        store.add(f"{p}.mlp.w2", normal(hidden, width, std=proj_std))
        store.add(f"{p}.mlp.b2", np.zeros(width))
    store.add(f"{prefix}.lnf.g", np.ones(width))
    store.add(f"{prefix}.lnf.b", np.zeros(width))


def stack_forward(
    g: Graph,
    prefix: str,
    x: ad.Node,
    n_heads: int,
    n_layers: int,
    causal: bool,
) -> ad.Node:
    """Run the block stack over a [T, width] sequence, ending in a layer norm."""
    for i in range(n_layers):
        p = f"{prefix}.h{i}"
        h = ad.layer_norm(x, g.param(f"{p}.ln1.g"), g.param(f"{p}.ln1.b"))
        att = ad.attention(
            h,
            g.param(f"{p}.attn.wqkv"),
            g.param(f"{p}.attn.bqkv"),
            g.param(f"{p}.attn.wo"),
            g.param(f"{p}.attn.bo"),
            n_heads=n_heads,
            causal=causal,
        )
        x = ad.add(x, att)
        h = ad.layer_norm(x, g.param(f"{p}.ln2.g"), g.param(f"{p}.ln2.b"))
        h = ad.linear(h, g.param(f"{p}.mlp.w1"), g.param(f"{p}.mlp.b1"))
        h = ad.gelu(h)
        h = ad.linear(h, g.param(f"{p}.mlp.w2"), g.param(f"{p}.mlp.b2"))
        x = ad.add(x, h)
    return ad.layer_norm(x, g.param(f"{prefix}.lnf.g"), g.param(f"{prefix}.lnf.b"))


# ---------------------------------------------------------------------------
# tape-free inference helpers (same math as the op set, no Node overhead)
# ---------------------------------------------------------------------------

def infer_layer_norm(x, gamma, beta, eps=1e-5):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    return (xc / np.sqrt(var + eps)) * gamma + beta


def infer_gelu(x):
    c = np.sqrt(2.0 / np.pi)
    return 0.5 * x * (1.0 + np.tanh(c * (x + 0.044715 * x**3)))


class KvCache:
    """Per-layer key/value rows accumulated during incremental decoding."""

    def __init__(self, n_layers: int):
        self.keys: list[np.ndarray | None] = [None] * n_layers
        self.values: list[np.ndarray | None] = [None] * n_layers

    def append(self, layer: int, k: np.ndarray, v: np.ndarray):
        if self.keys[layer] is None:
            self.keys[layer] = k
            self.values[layer] = v
        else:
            self.keys[layer] = np.concatenate([self.keys[layer], k], axis=1)
            self.values[layer] = np.concatenate([self.values[layer], v], axis=1)
        return self.keys[layer], self.values[layer]


def infer_stack(
    params: dict[str, np.ndarray],
    prefix: str,
    x: np.ndarray,
    n_heads: int,
    n_layers: int,
    cache: KvCache | None = None,
) -> np.ndarray:
    """Causal stack forward for inference.

    With a cache, `x` holds only the new suffix rows; cached keys/values supply
    the already-processed prefix. Without a cache this is a plain full pass.
    """
    T, D = x.shape
    hd = D // n_heads
    inv_sqrt = 1.0 / np.sqrt(hd)
    for i in range(n_layers):
        p = f"{prefix}.h{i}"
        h = infer_layer_norm(x, params[f"{p}.ln1.g"], params[f"{p}.ln1.b"])
        qkv = h @ params[f"{p}.attn.wqkv"] + params[f"{p}.attn.bqkv"]
        q, k, v = np.split(qkv, 3, axis=1)

        def to_heads(m, t):
            return m.reshape(t, n_heads, hd).transpose(1, 0, 2)

        qh = to_heads(q, T)
        kh, vh = to_heads(k, T), to_heads(v, T)
        past = 0
        if cache is not None:
            if cache.keys[i] is not None:
                past = cache.keys[i].shape[1]
            kh, vh = cache.append(i, kh, vh)
        scores = np.matmul(qh, kh.transpose(0, 2, 1)) * inv_sqrt  # [H, T, past+T]
        total = past + T
        mask = np.triu(np.ones((T, total), dtype=bool), k=1 + past)
        scores = np.where(mask, -np.inf, scores)
        smax = scores.max(axis=-1, keepdims=True)
        pr = np.exp(scores - smax)
        pr /= pr.sum(axis=-1, keepdims=True)
        att = np.matmul(pr, vh).transpose(1, 0, 2).reshape(T, D)
        x = x + att @ params[f"{p}.attn.wo"] + params[f"{p}.attn.bo"]
        h = infer_layer_norm(x, params[f"{p}.ln2.g"], params[f"{p}.ln2.b"])
        h = infer_gelu(h @ params[f"{p}.mlp.w1"] + params[f"{p}.mlp.b1"])
        x = x + h @ params[f"{p}.mlp.w2"] + params[f"{p}.mlp.b2"]
    return infer_layer_norm(x, params[f"{prefix}.lnf.g"], params[f"{prefix}.lnf.b"])
