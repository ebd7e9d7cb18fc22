"""Learned option generator: prompt encoder, K heads, set decoder, matching loss.

The encoder is a causal transformer; its final-position state fans out through
K linear heads into a non-causal transformer over the K slots, which emits one
cluster center per slot in word-embedding space. Training pulls centers toward
sparse-coded continuation words and pushes them from matched random words;
codes are re-estimated every step and treated as constants in the backward
pass.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, asdict

import numpy as np

from .clustering import NnscSettings, nnsc_encode_batch
from .corpus import PromptContinuationExample
from .embedspace import EmbeddingTable, TopicOption, nearest_words, topic_embedding
from .neural import autodiff as ad
from .neural.store import Graph, ParamStore
from .neural.transformer import init_stack, stack_forward


class DegenerateOptionError(ValueError):
    def __init__(self, head: int, norm: float):
        super().__init__(f"head {head} produced a near-zero center (norm {norm:.3e})")
        self.head = head


class MatchingLossError(ValueError):
    pass


class TrainingDiverged(RuntimeError):
    def __init__(self, message: str, last_good: ParamStore | None):
        super().__init__(message)
        self.last_good = last_good


@dataclass
class OptionGenConfig:
    vocab_size: int
    embed_dim: int
    k: int = 10
    width: int = 128
    n_heads: int = 4
    encoder_layers: int = 2
    decoder_layers: int = 5
    context: int = 256
    lam: float = 0.1
    positives: int = 50
    negatives: int = 50
    code_iters: int = 150
    normalize_centers: bool = True
    lam_warmup_epochs: int = 0
    negative_warmup_epochs: int = 0
    optimizer: str = "sgd"
    lr: float = 0.05
    weight_decay: float = 0.0
    epochs: int = 1
    seed: int = 0
    dtype: str = "float32"

    def lam_at(self, epoch: int) -> float:
        """Sparsity ramp: a zero penalty keeps every code (and so every
        gradient) alive while centers are still far from the data; the full
        penalty then restores the winner-take-most matching."""
        if self.lam_warmup_epochs <= 0:
            return self.lam
        return self.lam * min(1.0, epoch / self.lam_warmup_epochs)

    def negatives_at(self, epoch: int) -> bool:
        """Push is deferred until the pull has locked centers onto the data:
        with an untrained encoder the push term's only stable point is the
        fully decoupled one, where no gradient ever flows again."""
        return epoch >= self.negative_warmup_epochs

    def to_dict(self) -> dict:
        return asdict(self)


def init_option_generator(cfg: OptionGenConfig,
                          rng: np.random.Generator) -> ParamStore:
    store = ParamStore(np.dtype(cfg.dtype))
    w = cfg.width
    store.add("enc.tok", rng.normal(0, 0.02, size=(cfg.vocab_size, w)))
    store.add("enc.pos", rng.normal(0, 0.02, size=(cfg.context, w)))
    init_stack(store, "enc", w, cfg.encoder_layers, rng)
    store.add("heads.w", rng.normal(0, 0.02, size=(w, cfg.k * w)))
    store.add("heads.b", np.zeros(cfg.k * w))
    init_stack(store, "dec", w, cfg.decoder_layers, rng)
    store.add("out.w", rng.normal(0, 0.02, size=(w, cfg.embed_dim)))
    store.add("out.b", np.zeros(cfg.embed_dim))
    return store


def _encode(g: Graph, cfg: OptionGenConfig, token_ids: np.ndarray) -> ad.Node:
    t = len(token_ids)
    x = ad.add(
        ad.embedding(g.param("enc.tok"), token_ids),
        ad.embedding(g.param("enc.pos"), np.arange(t)),
    )
    return stack_forward(g, "enc", x, cfg.n_heads, cfg.encoder_layers, causal=True)


def _decode_centers(g: Graph, cfg: OptionGenConfig, state_row: ad.Node) -> ad.Node:
    z = ad.linear(state_row, g.param("heads.w"), g.param("heads.b"))
    zk = ad.reshape(z, (cfg.k, cfg.width))
    dec = stack_forward(g, "dec", zk, cfg.n_heads, cfg.decoder_layers, causal=False)
    return ad.linear(dec, g.param("out.w"), g.param("out.b"))


def _loss_centers(cfg: OptionGenConfig, centers: ad.Node) -> ad.Node:
    """Centers as seen by the matching loss.

    Training on unit-scale centers keeps the sparse codes O(1); without it the
    L1 code penalty rewards ever-growing center norms until the codes, and
    with them all gradients, collapse toward zero.
    """
    return ad.row_normalize(centers) if cfg.normalize_centers else centers


def forward_centers(
    store: ParamStore,
    cfg: OptionGenConfig,
    paragraph_ids: np.ndarray,
    prompt_ends: list[int],
) -> tuple[Graph, list[ad.Node]]:
    """Centers for several nested prompts from one shared encoder pass.

    `prompt_ends[i]` is the index of prompt i's last token within the
    paragraph; the hidden state at that position summarizes that prefix under
    the causal mask.
    """
    g = Graph(store)
    h = _encode(g, cfg, paragraph_ids)
    centers = []
    for end in prompt_ends:
        row = ad.take_rows(h, np.array([end]))
        centers.append(_decode_centers(g, cfg, row))
    return g, centers


def predict_centers(store: ParamStore, cfg: OptionGenConfig,
                    prompt_ids) -> np.ndarray:
    """K raw cluster centers for a prompt; overlong prompts keep their tail."""
    ids = np.asarray(prompt_ids, dtype=np.int64)
    if ids.size == 0:
        raise ValueError("prompt must contain at least one token")
    if ids.size > cfg.context:
        ids = ids[-cfg.context:]
    _, centers = forward_centers(store, cfg, ids, [ids.size - 1])
    return centers[0].value.astype(np.float64)


def render_options(centers: np.ndarray, table: EmbeddingTable,
                   m: int) -> list[TopicOption]:
    """Normalize each center and attach its nearest words and topic embedding."""
    options = []
    for head, center in enumerate(np.asarray(centers, dtype=np.float64)):
        norm = np.linalg.norm(center)
        if norm < 1e-9:
            raise DegenerateOptionError(head, float(norm))
        unit = center / norm
        top = nearest_words(table, unit, m)
        t = topic_embedding(table, unit, m)
        options.append(TopicOption(center=unit, top_words=top,
                                   topic_embedding=t, source_id=head))
    return options


def matching_loss(
    g: Graph,
    centers: ad.Node,
    positives: np.ndarray,
    negatives: np.ndarray,
    lam: float,
    code_iters: int,
) -> tuple[ad.Node, np.ndarray, np.ndarray]:
    """Pull/push loss against sparse-coded word embeddings.

    Codes are solved outside the tape, so gradients reach only the centers.
    Returns the scalar loss node plus the positive and negative code matrices.
    """
    positives = np.atleast_2d(positives)
    negatives = (np.zeros((0, positives.shape[1]))
                 if negatives is None or len(negatives) == 0
                 else np.atleast_2d(negatives))
    if positives.shape[0] == 0:
        raise MatchingLossError("an example must have at least one positive word")
    settings = NnscSettings(iters=code_iters, lam=lam)
    cvals = centers.value.astype(np.float64)
    codes_pos = nnsc_encode_batch(positives, cvals, settings)
    codes_neg = nnsc_encode_batch(negatives, cvals, settings) \
        if negatives.shape[0] else np.zeros((0, cvals.shape[0]))
    codes = np.vstack([codes_pos, codes_neg])
    embs = np.vstack([positives, negatives])
    weights = np.concatenate([np.ones(len(codes_pos)), -np.ones(len(codes_neg))])
    residual = ad.sub(ad.matmul(g.const(codes), centers), g.const(embs))
    loss = ad.weighted_rows_sumsq(residual, weights.astype(centers.value.dtype))
    return loss, codes_pos, codes_neg


@dataclass
class ParagraphBatch:
    token_ids: np.ndarray
    prompt_ends: list[int]
    positive_words: list[list[str]]


def group_by_paragraph(
    examples: list[PromptContinuationExample],
) -> list[ParagraphBatch]:
    """Bundle the nested prompts of one paragraph into a single batch."""
    batches: list[ParagraphBatch] = []
    current_key: int | None = None
    for ex in examples:
        if ex.paragraph_index != current_key:
            batches.append(ParagraphBatch(
                token_ids=np.asarray(ex.paragraph.ids, dtype=np.int64),
                prompt_ends=[],
                positive_words=[],
            ))
            current_key = ex.paragraph_index
        batches[-1].prompt_ends.append(ex.prompt_len - 1)
        batches[-1].positive_words.append(ex.positives)
    return batches


@dataclass
class OptionGenHistory:
    train_loss: list[float] = field(default_factory=list)
    heldout_loss: list[float] = field(default_factory=list)


def mean_matching_loss(
    store: ParamStore,
    cfg: OptionGenConfig,
    batches: list[ParagraphBatch],
    table: EmbeddingTable,
    neg_source: list[list[str]],
    rng: np.random.Generator,
) -> float:
    """Average matching loss over a stream, no parameter updates."""
    losses = []
    neg_order = rng.permutation(len(neg_source)) if neg_source else []
    flat = 0
    for batch in batches:
        ids = batch.token_ids[: cfg.context]
        ends = [e for e in batch.prompt_ends if e < ids.size]
        if not ends:
            continue
        _, centers = forward_centers(store, cfg, ids, ends)
        for c, words in zip(centers, batch.positive_words[: len(ends)]):
            pos, _ = table.rows(words[: cfg.positives])
            if pos.shape[0] == 0:
                continue
            negs = np.zeros((0, cfg.embed_dim))
            if len(neg_source):
                neg_words = neg_source[neg_order[flat % len(neg_order)]]
                flat += 1
                negs, _ = table.rows(neg_words[: cfg.negatives])
            g2 = Graph(store)
            loss, _, _ = matching_loss(
                g2, _loss_centers(cfg, ad.const(c.value)), pos, negs,
                cfg.lam, cfg.code_iters)
            losses.append(float(loss.value))
    return float(np.mean(losses)) if losses else float("nan")


def train_option_generator(
    examples: list[PromptContinuationExample],
    table: EmbeddingTable,
    cfg: OptionGenConfig,
    rng: np.random.Generator,
    heldout: list[PromptContinuationExample] | None = None,
    checkpoint_cb=None,
) -> tuple[ParamStore, OptionGenHistory]:
    """Epochs of per-paragraph updates with the matching loss.

    Negatives for each prompt are the positives of another randomly drawn
    example. Divergence raises TrainingDiverged carrying the last epoch-end
    parameters.
    """
    from .neural.optim import make_optimizer

    store = init_option_generator(cfg, rng)
    history = OptionGenHistory()
    batches = group_by_paragraph(examples)
    all_positive_lists = [w for b in batches for w in b.positive_words]
    heldout_batches = group_by_paragraph(heldout) if heldout else []
    optimizer = make_optimizer(cfg.optimizer, cfg.lr, cfg.weight_decay)
    last_good: ParamStore | None = None

    for epoch in range(cfg.epochs):
        order = rng.permutation(len(batches))
        neg_order = rng.permutation(len(all_positive_lists))
        epoch_losses = []
        flat = 0
        lam = cfg.lam_at(epoch)
        use_negatives = cfg.negatives_at(epoch)
        try:
            for bi in order:
                batch = batches[bi]
                ids = batch.token_ids[: cfg.context]
                ends = [e for e in batch.prompt_ends if e < ids.size]
                if not ends:
                    continue
                g, centers = forward_centers(store, cfg, ids, ends)
                total: ad.Node | None = None
                n_terms = 0
                for c, words in zip(centers, batch.positive_words[: len(ends)]):
                    pos, _ = table.rows(words[: cfg.positives])
                    if pos.shape[0] == 0:
                        continue
                    neg_words = all_positive_lists[neg_order[flat % len(neg_order)]]
                    flat += 1
                    negs, _ = table.rows(neg_words[: cfg.negatives])
                    if not use_negatives:
                        negs = negs[:0]
                    loss, _, _ = matching_loss(g, _loss_centers(cfg, c), pos,
                                               negs, lam, cfg.code_iters)
                    total = loss if total is None else ad.add(total, loss)
                    n_terms += 1
                if total is None:
                    continue
                total = ad.scale(total, 1.0 / n_terms)
                store.zero_grads()
                g.backward(total)
                optimizer.step(store)
                epoch_losses.append(float(total.value))
        except ad.NonFiniteError as exc:
            raise TrainingDiverged(f"loss diverged in epoch {epoch}: {exc}",
                                   last_good) from exc
        history.train_loss.append(float(np.mean(epoch_losses)))
        if heldout_batches:
            eval_rng = np.random.default_rng(cfg.seed + 1000 + epoch)
            history.heldout_loss.append(mean_matching_loss(
                store, cfg, heldout_batches, table, all_positive_lists, eval_rng))
        last_good = store.copy()
        if checkpoint_cb is not None:
            checkpoint_cb(epoch, store, history)
    if cfg.epochs == 0:
        warnings.warn("epochs=0: returning freshly initialized parameters")
    return store, history
