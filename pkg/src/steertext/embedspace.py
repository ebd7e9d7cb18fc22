"""Normalized word-embedding space: loading, neighbors, topic/prompt embeddings.

All stored vectors are unit length, so squared L2 distance equals twice the
cosine distance and nearest-by-cosine equals nearest-by-distance.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np


class EmbeddingFormatError(ValueError):
    """Raised for malformed embedding files; carries the offending line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class DegenerateTopicError(ValueError):
    """The weighted word sum in a topic embedding collapsed to ~zero."""


@dataclass
class EmbeddingTable:
    dim: int
    words: list[str]
    vocab: dict[str, int]
    matrix: np.ndarray  # [V, dim], unit rows
    rejected: list[tuple[str, str]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word in self.vocab

    def row(self, word: str) -> np.ndarray:
        return self.matrix[self.vocab[word]]

    def rows(self, words) -> tuple[np.ndarray, list[str]]:
        """Stack embeddings for in-vocabulary words; also return the misses."""
        idx, oov = [], []
        for w in words:
            i = self.vocab.get(w)
            if i is None:
                oov.append(w)
            else:
                idx.append(i)
        if idx:
            return self.matrix[np.asarray(idx)], oov
        return np.zeros((0, self.dim)), oov


@dataclass
class PromptEmbedding:
    vector: np.ndarray
    n_words: int
    n_oov: int

    @property
    def is_zero(self) -> bool:
        return self.n_words == 0 or not np.any(self.vector)


@dataclass
class TopicOption:
    center: np.ndarray                     # unit vector at render time
    top_words: list[tuple[str, float]]     # (word, cosine), descending
    topic_embedding: np.ndarray            # Eq.-style weighted average, unit
    source_id: int = 0                     # head index or cluster id

    @property
    def words(self) -> list[str]:
        return [w for w, _ in self.top_words]


def _normalize_rows(matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(matrix, axis=1)
    ok = norms > 0
    out = matrix.copy()
    out[ok] = out[ok] / norms[ok, None]
    return out, ok


def load_embeddings(path) -> EmbeddingTable:
    """Read a text-format embedding file: `token v1 ... vd`, one per line.

    Rows are renormalized to unit length. Zero vectors and duplicate tokens are
    rejected (reported on the table); structural problems raise with the line
    number.
    """
    words: list[str] = []
    vectors: list[np.ndarray] = []
    rejected: list[tuple[str, str]] = []
    seen: set[str] = set()
    dim: int | None = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split(" ")
            if len(parts) < 2:
                raise EmbeddingFormatError("expected token followed by floats", lineno)
            token = parts[0]
            try:
                vec = np.array([float(x) for x in parts[1:]], dtype=np.float64)
            except ValueError as exc:
                raise EmbeddingFormatError(f"bad float field ({exc})", lineno) from None
            if dim is None:
                dim = vec.size
            elif vec.size != dim:
                raise EmbeddingFormatError(
                    f"dimension {vec.size} != first row's {dim}", lineno
                )
            if token in seen:
                rejected.append((token, "duplicate token"))
                continue
            norm = np.linalg.norm(vec)
            if norm == 0.0 or not np.isfinite(norm):
                rejected.append((token, "zero or non-finite vector"))
                continue
            seen.add(token)
            words.append(token)
            vectors.append(vec / norm)
    if dim is None:
        raise EmbeddingFormatError("empty embedding file", 0)
    matrix = np.vstack(vectors) if vectors else np.zeros((0, dim))
    vocab = {w: i for i, w in enumerate(words)}
    return EmbeddingTable(dim=dim, words=words, vocab=vocab, matrix=matrix,
                          rejected=rejected)


def save_embeddings(table: EmbeddingTable, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for word, row in zip(table.words, table.matrix):
            fh.write(word + " " + " ".join(repr(float(x)) for x in row) + "\n")


def nearest_words(
    table: EmbeddingTable,
    query: np.ndarray,
    m: int,
    exclude: set[str] | frozenset[str] = frozenset(),
) -> list[tuple[str, float]]:
    """The m vocabulary words with highest cosine to `query`.

    Ties break by ascending row index. Asking for more words than remain after
    exclusion returns all available.
    """
    qn = np.linalg.norm(query)
    if qn == 0:
        raise ValueError("nearest_words requires a nonzero query")
    cos = table.matrix @ (query / qn)
    if exclude:
        keep = np.fromiter(
            (w not in exclude for w in table.words), dtype=bool, count=len(table.words)
        )
        candidates = np.nonzero(keep)[0]
    else:
        candidates = np.arange(len(table.words))
    m_eff = min(m, candidates.size)
    if m_eff == 0:
        return []
    sub = cos[candidates]
    # argsort on (-cos, index): stable sort keeps ascending index among ties
    order = np.argsort(-sub, kind="stable")[:m_eff]
    picked = candidates[order]
    return [(table.words[i], float(cos[i])) for i in picked]


def topic_embedding(table: EmbeddingTable, center: np.ndarray, m: int) -> np.ndarray:
    """Cosine-weighted average of the m nearest words, renormalized to unit."""
    if m < 1:
        raise ValueError("m must be >= 1")
    neighbors = nearest_words(table, center, m)
    return topic_embedding_from_words(table, center, [w for w, _ in neighbors])


def topic_embedding_from_words(
    table: EmbeddingTable, center: np.ndarray, words: list[str]
) -> np.ndarray:
    cn = np.linalg.norm(center)
    if cn == 0:
        raise ValueError("topic embedding requires a nonzero center")
    chat = center / cn
    acc = np.zeros(table.dim)
    for w in words:
        e = table.row(w)
        acc += float(e @ chat) * e
    norm = np.linalg.norm(acc)
    if norm < 1e-9:
        raise DegenerateTopicError(
            f"weighted word sum has norm {norm:.3e} for words {words!r}"
        )
    return acc / norm


def prompt_embedding(table: EmbeddingTable, words) -> PromptEmbedding:
    """Arithmetic mean of in-vocabulary word embeddings; OOV words are counted."""
    rows, oov = table.rows(words)
    if rows.shape[0] == 0:
        return PromptEmbedding(np.zeros(table.dim), 0, len(oov))
    return PromptEmbedding(rows.mean(axis=0), rows.shape[0], len(oov))


def train_embeddings(
    token_lists,
    dim: int = 64,
    window: int = 5,
    min_count: int = 2,
    max_vocab: int = 50_000,
    seed: int = 0,
) -> EmbeddingTable:
    """Fit toy embeddings by truncated SVD of the PPMI co-occurrence matrix.

    Good enough to give topically coherent neighborhoods on small corpora;
    production use should load pretrained vectors instead.
    """
    from collections import Counter

    import scipy.sparse as sp
    from scipy.sparse.linalg import svds

    counts: Counter[str] = Counter()
    for toks in token_lists:
        counts.update(toks)
    vocab_words = [w for w, c in counts.most_common(max_vocab) if c >= min_count]
    vocab = {w: i for i, w in enumerate(vocab_words)}
    v = len(vocab_words)
    if v < dim + 1:
        raise ValueError(f"vocabulary of {v} too small for dim={dim}")

    rows, cols = [], []
    for toks in token_lists:
        ids = [vocab.get(t, -1) for t in toks]
        n = len(ids)
        for i, a in enumerate(ids):
            if a < 0:
                continue
            for j in range(max(0, i - window), min(n, i + window + 1)):
                b = ids[j]
                if j == i or b < 0:
                    continue
                rows.append(a)
                cols.append(b)
    data = np.ones(len(rows))
    cooc = sp.coo_matrix((data, (rows, cols)), shape=(v, v)).tocsr()

    total = cooc.sum()
    row_sum = np.asarray(cooc.sum(axis=1)).ravel()
    col_sum = np.asarray(cooc.sum(axis=0)).ravel()
    coo = cooc.tocoo()
    pmi = np.log((coo.data * total) / (row_sum[coo.row] * col_sum[coo.col]))
    pmi = np.maximum(pmi, 0.0)
    ppmi = sp.coo_matrix((pmi, (coo.row, coo.col)), shape=(v, v)).tocsr()

    rng = np.random.default_rng(seed)
    v0 = rng.normal(size=min(ppmi.shape))
    u, s, _ = svds(ppmi, k=dim, v0=v0)
    emb = u * np.sqrt(s)

    normed, ok = _normalize_rows(emb)
    words = [w for w, good in zip(vocab_words, ok) if good]
    matrix = normed[ok]
    rejected = [(w, "zero vector from factorization")
                for w, good in zip(vocab_words, ok) if not good]
    if rejected:
        warnings.warn(f"{len(rejected)} tokens dropped with zero vectors")
    return EmbeddingTable(
        dim=dim,
        words=words,
        vocab={w: i for i, w in enumerate(words)},
        matrix=matrix,
        rejected=rejected,
    )
