"""Adapters that turn every option source into `example -> K TopicOption`."""

from __future__ import annotations

import numpy as np

from . import optiongen as optiongen_mod
from .clustering import (
    GlobalTopicIndex,
    NnscSettings,
    local_options,
    select_global_topics,
)
from .corpus import PromptContinuationExample, StopWordList, is_content_word
from .embedspace import EmbeddingTable, TopicOption, nearest_words, prompt_embedding, \
    topic_embedding


def _example_rng(seed: int, example: PromptContinuationExample,
                 salt: int) -> np.random.Generator:
    return np.random.default_rng(
        (seed, salt, example.paragraph_index, example.prompt_len))


def _prompt_words(example: PromptContinuationExample,
                  stops: StopWordList) -> list[str]:
    return [s for s in example.prompt.surfaces if is_content_word(s, stops)]


def sample_global_options(table: EmbeddingTable, k: int, m: int,
                          rng: np.random.Generator) -> list[TopicOption]:
    """K random vocabulary rows as centers, rendered like any other topics."""
    idx = rng.choice(len(table), size=k, replace=False)
    options = []
    for rank, i in enumerate(idx):
        center = table.matrix[int(i)]
        options.append(TopicOption(
            center=center,
            top_words=nearest_words(table, center, m),
            topic_embedding=topic_embedding(table, center, m),
            source_id=rank,
        ))
    return options


def make_trained_method(store, cfg, table: EmbeddingTable, m: int):
    def method(example: PromptContinuationExample) -> list[TopicOption]:
        centers = optiongen_mod.predict_centers(store, cfg, example.prompt.ids)
        return optiongen_mod.render_options(centers, table, m)
    return method


def make_local_method(kind: str, table: EmbeddingTable, stops: StopWordList,
                      k: int, m: int, seed: int = 0,
                      nnsc_settings: NnscSettings | None = None):
    def method(example: PromptContinuationExample) -> list[TopicOption]:
        rng = _example_rng(seed, example, {"kmeans": 1, "nnsc": 2, "sample": 3}[kind])
        return local_options(_prompt_words(example, stops), table, k, m, kind,
                             rng, nnsc_settings)
    return method


def make_global_method(index: GlobalTopicIndex, table: EmbeddingTable,
                       stops: StopWordList, k: int):
    def method(example: PromptContinuationExample) -> list[TopicOption]:
        pe = prompt_embedding(table, _prompt_words(example, stops))
        return select_global_topics(index, pe, k)
    return method


def make_sample_global_method(table: EmbeddingTable, k: int, m: int,
                              seed: int = 0):
    def method(example: PromptContinuationExample) -> list[TopicOption]:
        rng = _example_rng(seed, example, 4)
        return sample_global_options(table, k, m, rng)
    return method
