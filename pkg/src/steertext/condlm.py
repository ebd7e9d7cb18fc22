"""Conditional text generator: an autoregressive LM steered by embeddings
inserted before the last prompt token.

Inserted condition vectors are projected to model width and tagged with a
dedicated positional table; real tokens keep their original positions. The
training loss ignores outputs at inserted rows, and generation decodes with
top-k sampling.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .corpus import StopWordList, is_content_word, sample_condition_words
from .embedspace import EmbeddingTable
from .neural import autodiff as ad
from .neural.optim import make_optimizer
from .neural.store import Graph, ParamStore
from .neural.transformer import KvCache, infer_stack, init_stack, stack_forward


class LayoutError(ValueError):
    pass


class TrainingDiverged(RuntimeError):
    def __init__(self, message: str, last_good: ParamStore | None):
        super().__init__(message)
        self.last_good = last_good


@dataclass
class CondLmConfig:
    vocab_size: int
    embed_dim: int
    width: int = 128
    n_heads: int = 4
    n_layers: int = 2
    context: int = 256
    k_max: int = 10
    window_o: int = 25
    insert_sites: int = 5
    long_window_every: int = 0
    topk: int = 40
    max_tokens: int = 50
    optimizer: str = "adaptive"
    lr: float = 1e-3
    weight_decay: float = 0.01
    epochs: int = 2
    batch_size: int = 8
    patience: int = 3
    seed: int = 0
    dtype: str = "float32"

    def to_dict(self) -> dict:
        return asdict(self)


def init_cond_lm(cfg: CondLmConfig, rng: np.random.Generator,
                 table: EmbeddingTable | None = None,
                 vocab=None) -> ParamStore:
    """Fresh parameters; with a table and vocabulary, word-vector init.

    The word-vector init maps every in-table word's embedding through one
    random injection R into the model width, uses it as the token row, and
    sets the condition projection to the same R. A condition row then starts
    out as a pseudo-occurrence of its word (plus the future-position marker),
    so every attention pattern and output circuit learned for tokens applies
    to inserted conditions from the first step. Trained from scratch without
    this, the sharpening attention heads starve the alien condition rows of
    probability mass, and with it of gradient, before they are ever useful.
    """
    store = ParamStore(np.dtype(cfg.dtype))
    w = cfg.width
    store.add("lm.tok", rng.normal(0, 0.02, size=(cfg.vocab_size, w)))
    store.add("lm.pos_w", rng.normal(0, 0.02, size=(cfg.context, w)))
    # shared marker so condition rows are recognizable as a class; the table
    # stays per-index as the position signal
    marker = rng.normal(0, 0.1, size=w)
    store.add("lm.pos_f", marker + rng.normal(0, 0.02, size=(cfg.context, w)))
    store.add("lm.cond.w", rng.normal(0, 0.1, size=(cfg.embed_dim, w)))
    store.add("lm.cond.b", np.zeros(w))
    init_stack(store, "lm", w, cfg.n_layers, rng)
    store.add("lm.out.w", rng.normal(0, 0.02, size=(w, cfg.vocab_size)))
    store.add("lm.out.b", np.zeros(cfg.vocab_size))
    if table is not None and vocab is not None:
        injection = rng.normal(0, 0.05, size=(table.dim, w))
        tok = store.params["lm.tok"]
        for word, idx in vocab.index.items():
            if word in table:
                tok[idx] = (table.row(word) @ injection).astype(tok.dtype)
        store.params["lm.cond.w"][:] = injection.astype(store.dtype)
    return store


# ---------------------------------------------------------------------------
# layouts
# ---------------------------------------------------------------------------

@dataclass
class InputLayout:
    """Interleaving of real tokens and inserted condition rows.

    Tokens keep their sequential positions in the word-position table; every
    condition row carries the future-position entry of the token it precedes.
    """
    token_ids: np.ndarray                  # [Lt]
    cond_vectors: np.ndarray               # [Nc, d]
    cond_sites: np.ndarray                 # [Nc] token index each row precedes
    src_of_row: np.ndarray                 # [L] 0 = token, 1 = condition
    idx_in_src: np.ndarray                 # [L]

    @property
    def length(self) -> int:
        return self.src_of_row.size

    @property
    def is_cond(self) -> np.ndarray:
        return self.src_of_row == 1

    @property
    def token_rows(self) -> np.ndarray:
        return np.nonzero(self.src_of_row == 0)[0]


def build_layout(token_ids, insertions: list[tuple[int, np.ndarray]]) -> InputLayout:
    """Interleave condition blocks into a token sequence.

    Each insertion is (site, vectors): the block goes immediately before the
    token at index `site`. Sites must be strictly increasing and in range.
    """
    token_ids = np.asarray(token_ids, dtype=np.int64)
    lt = token_ids.size
    if lt == 0:
        raise LayoutError("layout requires at least one token")
    prev = -1
    for site, _ in insertions:
        if not 0 <= site < lt:
            raise LayoutError(f"insertion site {site} outside [0, {lt})")
        if site <= prev:
            raise LayoutError("insertion sites must be strictly increasing")
        prev = site
    src, idx = [], []
    cond_vecs, cond_sites = [], []
    blocks = {site: vecs for site, vecs in insertions}
    ci = 0
    for i in range(lt):
        vecs = blocks.get(i)
        if vecs is not None:
            for v in np.atleast_2d(vecs):
                src.append(1)
                idx.append(ci)
                cond_vecs.append(v)
                cond_sites.append(i)
                ci += 1
        src.append(0)
        idx.append(i)
    d = len(cond_vecs[0]) if cond_vecs else 0
    return InputLayout(
        token_ids=token_ids,
        cond_vectors=np.array(cond_vecs) if cond_vecs else np.zeros((0, d)),
        cond_sites=np.array(cond_sites, dtype=np.int64),
        src_of_row=np.array(src, dtype=np.int64),
        idx_in_src=np.array(idx, dtype=np.int64),
    )


def build_input(prompt_ids, conditions: np.ndarray, cfg: CondLmConfig,
                reserve: int = 0) -> InputLayout:
    """Test-time layout: every condition goes before the last prompt token.

    If prompt + conditions + reserve overflow the context window, the prompt
    head is dropped; conditions are never dropped.
    """
    prompt_ids = np.asarray(prompt_ids, dtype=np.int64)
    if prompt_ids.size == 0:
        raise LayoutError("prompt must contain at least one token")
    conditions = np.atleast_2d(conditions) if np.size(conditions) else \
        np.zeros((0, cfg.embed_dim))
    n_cond = conditions.shape[0]
    if n_cond > cfg.k_max:
        raise LayoutError(f"{n_cond} conditions exceed the budget of {cfg.k_max}")
    max_prompt = cfg.context - n_cond - reserve
    if max_prompt < 1:
        raise LayoutError("context window cannot fit conditions plus reserve")
    if prompt_ids.size > max_prompt:
        prompt_ids = prompt_ids[-max_prompt:]
    insertions = [(prompt_ids.size - 1, conditions)] if n_cond else []
    return build_layout(prompt_ids, insertions)


def layout_targets(layout: InputLayout) -> tuple[np.ndarray, np.ndarray]:
    """Per-row next-real-token targets and the ignore mask.

    Condition rows and the final token row are ignored; a real token's target
    is the next real token even when condition rows sit between them.
    """
    l = layout.length
    targets = np.zeros(l, dtype=np.int64)
    ignore = np.ones(l, dtype=bool)
    rows = layout.token_rows
    for i in range(layout.token_ids.size - 1):
        targets[rows[i]] = layout.token_ids[i + 1]
        ignore[rows[i]] = False
    return targets, ignore


# ---------------------------------------------------------------------------
# forward passes
# ---------------------------------------------------------------------------

def forward_hidden(g: Graph, cfg: CondLmConfig, layout: InputLayout) -> ad.Node:
    tok = ad.add(
        ad.embedding(g.param("lm.tok"), layout.token_ids),
        ad.embedding(g.param("lm.pos_w"), np.arange(layout.token_ids.size)),
    )
    if layout.cond_vectors.shape[0]:
        cond = ad.add(
            ad.linear(g.const(layout.cond_vectors), g.param("lm.cond.w"),
                      g.param("lm.cond.b")),
            ad.embedding(g.param("lm.pos_f"), layout.cond_sites),
        )
        x = ad.assemble_rows([tok, cond], layout.src_of_row, layout.idx_in_src)
    else:
        x = tok
    return stack_forward(g, "lm", x, cfg.n_heads, cfg.n_layers, causal=True)


def forward_logits(g: Graph, cfg: CondLmConfig, layout: InputLayout) -> ad.Node:
    h = forward_hidden(g, cfg, layout)
    return ad.linear(h, g.param("lm.out.w"), g.param("lm.out.b"))


def sequence_loss(store: ParamStore, cfg: CondLmConfig,
                  layout: InputLayout) -> tuple[Graph, ad.Node]:
    g = Graph(store)
    logits = forward_logits(g, cfg, layout)
    targets, ignore = layout_targets(layout)
    return g, ad.softmax_cross_entropy(logits, targets, ignore)


def _assemble_input_rows(params: dict[str, np.ndarray],
                         layout: InputLayout) -> np.ndarray:
    tok = params["lm.tok"][layout.token_ids] + \
        params["lm.pos_w"][: layout.token_ids.size]
    if layout.cond_vectors.shape[0] == 0:
        return tok
    dtype = params["lm.tok"].dtype
    cond = layout.cond_vectors.astype(dtype) @ params["lm.cond.w"] + \
        params["lm.cond.b"] + params["lm.pos_f"][layout.cond_sites]
    rows = np.empty((layout.length, tok.shape[1]), dtype=dtype)
    tok_mask = layout.src_of_row == 0
    rows[tok_mask] = tok[layout.idx_in_src[tok_mask]]
    rows[~tok_mask] = cond[layout.idx_in_src[~tok_mask]]
    return rows


def _softmax_row(logits: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(logits)):
        raise ad.NonFiniteError("non-finite logits during decoding")
    z = logits - logits.max()
    p = np.exp(z, dtype=np.float64)
    return p / p.sum()


class DecodeState:
    """Incremental decoding state: per-layer KV cache plus the live softmax."""

    def __init__(self, store: ParamStore, cfg: CondLmConfig, layout: InputLayout):
        self.store = store
        self.cfg = cfg
        self.next_position = int(layout.token_ids.size)
        self.cache = KvCache(cfg.n_layers)
        rows = _assemble_input_rows(store.params, layout)
        self._feed(rows)

    def _feed(self, rows: np.ndarray) -> None:
        h = infer_stack(self.store.params, "lm", rows, self.cfg.n_heads,
                        self.cfg.n_layers, cache=self.cache)
        logits = h[-1] @ self.store.params["lm.out.w"] + \
            self.store.params["lm.out.b"]
        self.probs = _softmax_row(logits)

    def advance(self, token_id: int) -> None:
        if self.next_position >= self.cfg.context:
            raise LayoutError("context window exhausted")
        p = self.store.params
        row = p["lm.tok"][token_id] + p["lm.pos_w"][self.next_position]
        self.next_position += 1
        self._feed(row[None, :])


def next_token_dist(store: ParamStore, cfg: CondLmConfig,
                    layout: InputLayout) -> np.ndarray:
    """Probability vector over the vocabulary after the layout's last row."""
    return DecodeState(store, cfg, layout).probs


def topk_sample(dist: np.ndarray, k: int,
                rng: np.random.Generator) -> tuple[int, int]:
    """Sample within the k most probable tokens (ties to lower ids).

    Returns (token id, rank of the token inside the truncated set).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    k_eff = min(k, dist.size)
    order = np.argsort(-dist, kind="stable")[:k_eff]
    probs = dist[order]
    probs = probs / probs.sum()
    rank = int(rng.choice(k_eff, p=probs))
    return int(order[rank]), rank


@dataclass
class GenerationResult:
    tokens: list[int]
    ranks: list[int] = field(default_factory=list)


def generate(
    store: ParamStore,
    cfg: CondLmConfig,
    prompt_ids,
    conditions: np.ndarray,
    max_tokens: int | None = None,
    k: int | None = None,
    rng: np.random.Generator | None = None,
) -> GenerationResult:
    """Autoregressive top-k decoding with conditions inserted exactly once."""
    max_tokens = cfg.max_tokens if max_tokens is None else max_tokens
    k = cfg.topk if k is None else k
    rng = rng if rng is not None else np.random.default_rng(0)
    layout = build_input(prompt_ids, conditions, cfg, reserve=max_tokens)
    result = GenerationResult(tokens=[])
    if max_tokens == 0:
        return result
    state = DecodeState(store, cfg, layout)
    for _ in range(max_tokens):
        token, rank = topk_sample(state.probs, k, rng)
        result.tokens.append(token)
        result.ranks.append(rank)
        if len(result.tokens) < max_tokens:
            state.advance(token)
    return result


def perplexity(
    store: ParamStore,
    cfg: CondLmConfig,
    token_ids,
    prompt_ids=None,
    conditions: np.ndarray | None = None,
) -> float:
    """exp(mean NLL) of `token_ids`, optionally conditioned on a prompt.

    Without a prompt the first token seeds the context and is not scored.
    """
    token_ids = np.asarray(token_ids, dtype=np.int64)
    if token_ids.size == 0:
        raise ValueError("perplexity needs at least one token")
    conds = conditions if conditions is not None else np.zeros((0, cfg.embed_dim))
    if prompt_ids is not None:
        prompt_ids = np.asarray(prompt_ids, dtype=np.int64)
        layout = build_input(prompt_ids, conds, cfg, reserve=token_ids.size)
        scored = token_ids
    else:
        if token_ids.size < 2:
            raise ValueError("need a prompt or at least two tokens")
        layout = build_input(token_ids[:1], conds, cfg,
                             reserve=token_ids.size - 1)
        scored = token_ids[1:]
    state = DecodeState(store, cfg, layout)
    nll = 0.0
    for i, tid in enumerate(scored):
        nll -= float(np.log(state.probs[tid]))
        if i + 1 < scored.size:
            state.advance(int(tid))
    return float(np.exp(nll / scored.size))


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def choose_insertions(
    surfaces: list[str],
    stops: StopWordList,
    table: EmbeddingTable,
    cfg: CondLmConfig,
    rng: np.random.Generator,
) -> list[tuple[int, np.ndarray]]:
    """Pick spaced insertion sites and sample future-word conditions for each.

    The block before token i treats x_i as the end of a prompt, so its window
    is the content words strictly after x_i. Windows never overlap: the next
    site starts after the previous window's last content word. Sampled words
    are restricted to the embedding vocabulary so every condition has a
    vector. With long_window_every = m, every m-th site triples its window so
    the model also sees condition blocks as large as users may request.
    """
    lt = len(surfaces)
    insertions: list[tuple[int, np.ndarray]] = []
    cursor = 1
    for j in range(cfg.insert_sites):
        remaining = cfg.insert_sites - len(insertions)
        if cursor > lt - 2:
            break
        slot = max(1, (lt - cursor) // remaining)
        hi = min(lt - 2, cursor + slot - 1)
        site = int(rng.integers(cursor, hi + 1))
        span = cfg.window_o
        if cfg.long_window_every and (j % cfg.long_window_every ==
                                      cfg.long_window_every - 1):
            span = min(3 * cfg.window_o, 25)
        window: list[str] = []
        end = site
        for i in range(site + 1, lt):
            if len(window) >= span:
                break
            s = surfaces[i]
            if is_content_word(s, stops) and s in table:
                window.append(s)
                end = i
        n, words = sample_condition_words(window, cfg.k_max, rng)
        if words:
            vecs, _ = table.rows(words)
            insertions.append((site, vecs))
        else:
            insertions.append((site, np.zeros((0, table.dim))))
        cursor = end + 1
    return [(site, vecs) for site, vecs in insertions if vecs.shape[0] > 0]


@dataclass
class CondLmHistory:
    train_loss: list[float] = field(default_factory=list)
    heldout_ppl: list[float] = field(default_factory=list)


def _heldout_perplexity(store: ParamStore, cfg: CondLmConfig,
                        sequences: list[np.ndarray]) -> float:
    ppls = [perplexity(store, cfg, seq) for seq in sequences if len(seq) >= 2]
    return float(np.mean(ppls)) if ppls else float("nan")


def train_conditional_lm(
    sequences: list,
    table: EmbeddingTable,
    stops: StopWordList,
    cfg: CondLmConfig,
    rng: np.random.Generator,
    heldout: list | None = None,
    checkpoint_cb=None,
    condition: bool = True,
    vocab=None,
) -> tuple[ParamStore, CondLmHistory]:
    """Train with future-word insertion at several sites per sequence.

    `sequences` are TokenSeq-like objects (ids + surfaces). Cross-entropy is
    computed on real-token rows only. With condition=False no insertions are
    made, which reduces to ordinary LM training. Passing the vocabulary
    enables word-vector initialization of the token rows.
    """
    store = init_cond_lm(cfg, rng, table=table if vocab is not None else None,
                         vocab=vocab)
    optimizer = make_optimizer(cfg.optimizer, cfg.lr, cfg.weight_decay)
    history = CondLmHistory()
    heldout_ids = [np.asarray(s.ids[: cfg.context], dtype=np.int64)
                   for s in (heldout or [])]
    last_good: ParamStore | None = None
    best_ppl = float("inf")
    strikes = 0

    for epoch in range(cfg.epochs):
        order = rng.permutation(len(sequences))
        losses = []
        pending = 0
        store.zero_grads()
        try:
            for si in order:
                seq = sequences[si]
                ids = np.asarray(seq.ids[: cfg.context], dtype=np.int64)
                surfaces = seq.surfaces[: cfg.context]
                if ids.size < 2:
                    continue
                insertions = choose_insertions(surfaces, stops, table, cfg, rng) \
                    if condition else []
                if ids.size + sum(v.shape[0] for _, v in insertions) > cfg.context:
                    insertions = []
                layout = build_layout(ids, insertions)
                g, loss = sequence_loss(store, cfg, layout)
                g.backward(ad.scale(loss, 1.0 / cfg.batch_size))
                losses.append(float(loss.value))
                pending += 1
                if pending == cfg.batch_size:
                    optimizer.step(store)
                    store.zero_grads()
                    pending = 0
            if pending:
                optimizer.step(store)
                store.zero_grads()
        except ad.NonFiniteError as exc:
            raise TrainingDiverged(f"loss diverged in epoch {epoch}: {exc}",
                                   last_good) from exc
        history.train_loss.append(float(np.mean(losses)) if losses else float("nan"))
        if heldout_ids:
            ppl = _heldout_perplexity(store, cfg, heldout_ids)
            history.heldout_ppl.append(ppl)
            if ppl < best_ppl:
                best_ppl = ppl
                strikes = 0
            else:
                strikes += 1
        last_good = store.copy()
        if checkpoint_cb is not None:
            checkpoint_cb(epoch, store, history)
        if heldout_ids and strikes >= cfg.patience:
            break
    return store, history
