"""Non-negative sparse coding and the non-learned option baselines."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .embedspace import (
    EmbeddingTable,
    PromptEmbedding,
    TopicOption,
    nearest_words,
    topic_embedding,
    DegenerateTopicError,
)


class ShortPromptError(ValueError):
    """Prompt supplies fewer distinct in-vocabulary content words than needed."""

    def __init__(self, needed: int, available: int):
        super().__init__(
            f"need {needed} distinct in-vocabulary content words, have {available}"
        )
        self.needed = needed
        self.available = available


@dataclass
class NnscSettings:
    """Projected adaptive-gradient solver knobs for the sparse-coding step."""
    iters: int = 2000
    step: float = 0.05
    decay: float = 0.9
    eps: float = 1e-8
    lam: float = 0.1


@dataclass
class SparseCode:
    weights: np.ndarray   # [K], in [0, 1]
    objective: float


def nnsc_objective(weights: np.ndarray, centers: np.ndarray, x: np.ndarray,
                   lam: float) -> float:
    r = weights @ centers - x
    return float(r @ r + lam * weights.sum())


def nnsc_encode_batch(
    xs: np.ndarray,
    centers: np.ndarray,
    settings: NnscSettings,
) -> np.ndarray:
    """Solve min_{0<=a<=1} ||a C - x||^2 + lam * sum(a) for every row of xs.

    Per-coordinate second-moment scaling with a linearly annealed step and a
    projection onto the box after every update. The anneal is what lets the
    iterate settle tightly instead of orbiting the optimum at a fixed radius.
    """
    xs = np.atleast_2d(xs)
    n, k = xs.shape[0], centers.shape[0]
    a = np.zeros((n, k))
    if settings.iters == 0:
        return a
    g2 = np.zeros_like(a)
    ctc2 = 2.0 * (centers @ centers.T)   # [K,K]
    xct2 = 2.0 * (xs @ centers.T)        # [N,K]
    for t in range(settings.iters):
        grad = a @ ctc2 - xct2 + settings.lam
        g2 = settings.decay * g2 + (1.0 - settings.decay) * grad * grad
        step_t = settings.step * (1.0 - t / settings.iters)
        a -= step_t * grad / (np.sqrt(g2) + settings.eps)
        np.clip(a, 0.0, 1.0, out=a)
    return a


def nnsc_encode(
    x: np.ndarray,
    centers: np.ndarray,
    settings: NnscSettings | None = None,
) -> SparseCode:
    settings = settings or NnscSettings()
    if settings.lam < 0:
        raise ValueError("lambda must be >= 0")
    a = nnsc_encode_batch(x[None, :], centers, settings)[0]
    return SparseCode(weights=a, objective=nnsc_objective(a, centers, x, settings.lam))


@dataclass
class KmeansResult:
    centers: np.ndarray
    labels: np.ndarray
    inertia_history: list[float] = field(default_factory=list)

    @property
    def inertia(self) -> float:
        return self.inertia_history[-1]


def _plusplus_seed(points: np.ndarray, j: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centers = [points[int(rng.integers(0, n))]]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, j):
        total = d2.sum()
        if total <= 0:
            idx = int(rng.integers(0, n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers.append(points[idx])
        d2 = np.minimum(d2, ((points - centers[-1]) ** 2).sum(axis=1))
    return np.array(centers)


def kmeans(
    points: np.ndarray,
    j: int,
    max_iter: int = 300,
    rng: np.random.Generator | None = None,
    tol: float = 1e-10,
) -> KmeansResult:
    """Lloyd iterations from distance-weighted seeding.

    Empty clusters are re-seeded from the point currently farthest from its
    center, so the within-cluster objective never increases.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.shape[0] < j:
        raise ValueError(f"need at least {j} points, have {points.shape[0]}")
    rng = rng if rng is not None else np.random.default_rng(0)
    centers = _plusplus_seed(points, j, rng)
    history: list[float] = []
    labels = np.zeros(points.shape[0], dtype=np.int64)
    for _ in range(max_iter):
        d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels = d2.argmin(axis=1)
        per_point = d2[np.arange(points.shape[0]), labels]
        inertia = float(per_point.sum())
        for c in range(j):
            mask = labels == c
            if mask.any():
                centers[c] = points[mask].mean(axis=0)
            else:
                far = int(per_point.argmax())
                centers[c] = points[far]
                labels[far] = c
                per_point = per_point.copy()
                per_point[far] = 0.0
        history.append(inertia)
        if len(history) >= 2 and history[-2] - history[-1] <= tol:
            break
    d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    labels = d2.argmin(axis=1)
    history.append(float(d2[np.arange(points.shape[0]), labels].sum()))
    return KmeansResult(centers=centers, labels=labels, inertia_history=history)


def _render_option(table: EmbeddingTable, center: np.ndarray, m: int,
                   source_id: int) -> TopicOption:
    norm = np.linalg.norm(center)
    if norm < 1e-9:
        raise DegenerateTopicError(f"near-zero center for option {source_id}")
    unit = center / norm
    top = nearest_words(table, unit, m)
    t = topic_embedding(table, unit, m)
    return TopicOption(center=unit, top_words=top, topic_embedding=t,
                       source_id=source_id)


@dataclass
class GlobalTopicIndex:
    centers: np.ndarray                    # [J, d]
    top_words: list[list[tuple[str, float]]]
    topic_embeddings: np.ndarray           # [J, d] unit rows
    m: int
    dropped: list[int] = field(default_factory=list)

    def __len__(self) -> int:
        return self.centers.shape[0]

    def option(self, j: int) -> TopicOption:
        return TopicOption(
            center=self.centers[j] / np.linalg.norm(self.centers[j]),
            top_words=self.top_words[j],
            topic_embedding=self.topic_embeddings[j],
            source_id=j,
        )


def build_global_index(
    table: EmbeddingTable,
    j: int,
    m: int,
    method: str = "kmeans",
    rng: np.random.Generator | None = None,
    max_iter: int = 300,
) -> GlobalTopicIndex:
    """Cluster the whole vocabulary (kmeans) or sample rows of it (sample)."""
    if len(table) < j:
        raise ValueError(f"vocabulary of {len(table)} smaller than J={j}")
    rng = rng if rng is not None else np.random.default_rng(0)
    if method == "kmeans":
        centers = kmeans(table.matrix, j, max_iter=max_iter, rng=rng).centers
    elif method == "sample":
        idx = rng.choice(len(table), size=j, replace=False)
        centers = table.matrix[idx].copy()
    else:
        raise ValueError(f"unknown global method {method!r}")

    kept_centers, tops, tembs, dropped = [], [], [], []
    for c_idx in range(j):
        center = centers[c_idx]
        try:
            norm = np.linalg.norm(center)
            if norm < 1e-9:
                raise DegenerateTopicError("zero center")
            unit = center / norm
            top = nearest_words(table, unit, m)
            t = topic_embedding(table, unit, m)
        except DegenerateTopicError:
            dropped.append(c_idx)
            continue
        kept_centers.append(unit)
        tops.append(top)
        tembs.append(t)
    return GlobalTopicIndex(
        centers=np.array(kept_centers),
        top_words=tops,
        topic_embeddings=np.array(tembs),
        m=m,
        dropped=dropped,
    )


def select_global_topics(
    index: GlobalTopicIndex,
    prompt: PromptEmbedding,
    k: int,
) -> list[TopicOption]:
    """The k clusters whose topic embeddings are closest to the prompt vector."""
    if len(index) < k:
        raise ValueError(f"index has {len(index)} clusters, need {k}")
    if prompt.is_zero:
        raise ValueError("prompt embedding is zero: no direction to match")
    q = prompt.vector / np.linalg.norm(prompt.vector)
    cos = index.topic_embeddings @ q
    order = np.argsort(-cos, kind="stable")[:k]
    return [index.option(int(i)) for i in order]


def _distinct_prompt_vectors(
    prompt_words: list[str], table: EmbeddingTable
) -> tuple[list[str], np.ndarray]:
    uniq = [w for w in dict.fromkeys(prompt_words) if w in table]
    if not uniq:
        return [], np.zeros((0, table.dim))
    return uniq, np.vstack([table.row(w) for w in uniq])


def _fit_local_nnsc(
    vectors: np.ndarray,
    k: int,
    rng: np.random.Generator,
    settings: NnscSettings,
    alternations: int = 50,
    code_iters: int = 200,
) -> np.ndarray:
    """Alternate sparse codes and least-squares atom updates, unit atoms."""
    n = vectors.shape[0]
    atoms = vectors[rng.choice(n, size=k, replace=False)].copy()
    code_settings = NnscSettings(
        iters=code_iters, step=settings.step, decay=settings.decay,
        eps=settings.eps, lam=settings.lam,
    )
    for _ in range(alternations):
        codes = nnsc_encode_batch(vectors, atoms, code_settings)
        gram = codes.T @ codes + 1e-8 * np.eye(k)
        atoms = np.linalg.solve(gram, codes.T @ vectors)
        norms = np.linalg.norm(atoms, axis=1)
        dead = norms < 1e-9
        if dead.any():
            atoms[dead] = vectors[rng.choice(n, size=int(dead.sum()))]
            norms = np.linalg.norm(atoms, axis=1)
        atoms /= norms[:, None]
    return atoms


def local_options(
    prompt_words: list[str],
    table: EmbeddingTable,
    k: int,
    m: int,
    method: str,
    rng: np.random.Generator,
    nnsc_settings: NnscSettings | None = None,
) -> list[TopicOption]:
    """Topics discovered from the prompt itself (kmeans | nnsc | sample)."""
    uniq, vectors = _distinct_prompt_vectors(prompt_words, table)
    if len(uniq) < k:
        raise ShortPromptError(k, len(uniq))
    if method == "kmeans":
        centers = kmeans(vectors, k, rng=rng).centers
    elif method == "sample":
        idx = rng.choice(len(uniq), size=k, replace=False)
        centers = vectors[idx]
    elif method == "nnsc":
        centers = _fit_local_nnsc(vectors, k, rng,
                                  nnsc_settings or NnscSettings())
    else:
        raise ValueError(f"unknown local method {method!r}")
    return [_render_option(table, centers[i], m, i) for i in range(k)]


def reconstruction_objective(vectors: np.ndarray, atoms: np.ndarray,
                             settings: NnscSettings) -> float:
    """Mean sparse-coding objective of `vectors` against `atoms`."""
    codes = nnsc_encode_batch(vectors, atoms, settings)
    recon = codes @ atoms
    per = ((recon - vectors) ** 2).sum(axis=1) + settings.lam * codes.sum(axis=1)
    return float(per.mean())
