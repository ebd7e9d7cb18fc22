"""Templated topical corpora for desk-scale training and evaluation.

Paragraphs walk through topics in runs of a few sentences; each topic hands
off to one of two fixed successors, so upcoming topics are partly but not
fully predictable from the prompt. Content vocabularies are disjoint across
topics, which makes co-occurrence embeddings cluster cleanly.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

_ONSETS = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"]
_VOWELS = ["a", "e", "i", "o", "u"]


@dataclass
class ToyCorpusConfig:
    n_topics: int = 20
    nouns_per_topic: int = 24
    verbs_per_topic: int = 8
    run_sentences: tuple[int, int] = (1, 2)
    paragraph_sentences: tuple[int, int] = (14, 20)
    n_paragraphs: int = 1800
    heldout_paragraphs: int = 250
    seed: int = 7


def _pseudoword(rng: np.random.Generator, syllables: int) -> str:
    return "".join(
        _ONSETS[int(rng.integers(len(_ONSETS)))] + _VOWELS[int(rng.integers(len(_VOWELS)))]
        for _ in range(syllables)
    )


@dataclass
class ToyVocabulary:
    nouns: list[list[str]]   # per topic
    verbs: list[list[str]]

    def topic_words(self, t: int) -> list[str]:
        return self.nouns[t] + self.verbs[t]

    @property
    def n_topics(self) -> int:
        return len(self.nouns)


def build_vocabulary(cfg: ToyCorpusConfig) -> ToyVocabulary:
    rng = np.random.default_rng((cfg.seed, 101))
    taken: set[str] = set()

    def fresh(syllables: int) -> str:
        while True:
            w = _pseudoword(rng, syllables)
            if w not in taken:
                taken.add(w)
                return w

    nouns = [[fresh(3) for _ in range(cfg.nouns_per_topic)]
             for _ in range(cfg.n_topics)]
    verbs = [[fresh(2) for _ in range(cfg.verbs_per_topic)]
             for _ in range(cfg.n_topics)]
    return ToyVocabulary(nouns=nouns, verbs=verbs)


def successors(topic: int, n_topics: int) -> tuple[int, int, int]:
    """Three fixed successors; with 20 topics the two-step reachable set of a
    topic has exactly 10 members, matching the option generator's K heads."""
    return ((topic + 1) % n_topics, (topic + 4) % n_topics,
            (topic + 9) % n_topics)


def _sentence(vocab: ToyVocabulary, topic: int, rng: np.random.Generator) -> str:
    nouns = vocab.nouns[topic]
    verbs = vocab.verbs[topic]
    n1 = nouns[int(rng.integers(len(nouns)))]
    n2 = nouns[int(rng.integers(len(nouns)))]
    v = verbs[int(rng.integers(len(verbs)))]
    shape = int(rng.integers(3))
    if shape == 0:
        return f"the {n1} {v} the {n2} ."
    if shape == 1:
        return f"a {n1} {v} and the {n2} {v} ."
    return f"the {n1} and the {n2} {v} ."


def make_paragraph(vocab: ToyVocabulary, cfg: ToyCorpusConfig,
                   rng: np.random.Generator) -> str:
    lo, hi = cfg.paragraph_sentences
    length = int(rng.integers(lo, hi + 1))
    topic = int(rng.integers(vocab.n_topics))
    sentences = []
    while len(sentences) < length:
        run_lo, run_hi = cfg.run_sentences
        run = int(rng.integers(run_lo, run_hi + 1))
        for _ in range(run):
            if len(sentences) >= length:
                break
            sentences.append(_sentence(vocab, topic, rng))
        nxt = successors(topic, vocab.n_topics)
        topic = nxt[int(rng.integers(len(nxt)))]
    return " ".join(sentences)


def make_corpus(cfg: ToyCorpusConfig) -> tuple[list[str], list[str], ToyVocabulary]:
    """(train paragraphs, heldout paragraphs, vocabulary)."""
    vocab = build_vocabulary(cfg)
    rng = np.random.default_rng((cfg.seed, 202))
    train = [make_paragraph(vocab, cfg, rng) for _ in range(cfg.n_paragraphs)]
    heldout = [make_paragraph(vocab, cfg, rng)
               for _ in range(cfg.heldout_paragraphs)]
    return train, heldout, vocab


def write_toy_dataset(out_dir: Path | str, cfg: ToyCorpusConfig | None = None,
                      embed_dim: int = 64) -> dict:
    """Write corpus files and trained embeddings; returns the paths."""
    from .corpus import split_text
    from .embedspace import save_embeddings, train_embeddings

    cfg = cfg or ToyCorpusConfig()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train, heldout, _ = make_corpus(cfg)
    train_path = out / "corpus_train.txt"
    heldout_path = out / "corpus_heldout.txt"
    train_path.write_text("\n\n".join(train) + "\n", encoding="utf-8")
    heldout_path.write_text("\n\n".join(heldout) + "\n", encoding="utf-8")
    token_lists = [split_text(p)[0] for p in train]
    table = train_embeddings(token_lists, dim=embed_dim, seed=cfg.seed)
    emb_path = out / "embeddings.txt"
    save_embeddings(table, emb_path)
    return {
        "train": train_path,
        "heldout": heldout_path,
        "embeddings": emb_path,
    }
