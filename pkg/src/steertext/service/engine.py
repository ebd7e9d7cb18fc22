"""Model bundle: checkpoint packing/unpacking and the request-level operations."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .. import condlm as condlm_mod
from .. import optiongen as optiongen_mod
from ..clustering import GlobalTopicIndex
from ..condlm import CondLmConfig
from ..corpus import StopWordList, Tokenizer, Vocabulary, is_content_word
from ..embedspace import EmbeddingTable, TopicOption
from ..neural.store import ParamStore
from ..optiongen import OptionGenConfig
from .checkpoint import Checkpoint, UnknownSectionError


class EmptyPromptError(ValueError):
    pass


class UnknownTopicError(ValueError):
    def __init__(self, topic_id):
        super().__init__(f"unknown topic id {topic_id!r}")
        self.topic_id = topic_id


class ConditionBudgetError(ValueError):
    def __init__(self, requested: int, budget: int):
        super().__init__(
            f"{requested} conditions exceed the budget of {budget}"
        )
        self.requested = requested
        self.budget = budget


class OovWordsError(ValueError):
    def __init__(self, words: list[str]):
        super().__init__(f"words not in the embedding vocabulary: {words}")
        self.words = words


def store_to_blobs(store: ParamStore) -> dict[str, np.ndarray]:
    return {name: store.params[name] for name in store.names()}


def store_from_blobs(blobs: dict[str, np.ndarray]) -> ParamStore:
    store = ParamStore(np.float32)
    for name in sorted(blobs):
        store.add(name, blobs[name])
    return store


def table_to_section(table: EmbeddingTable) -> tuple[dict, dict[str, np.ndarray]]:
    return {"dim": table.dim, "words": table.words}, {"matrix": table.matrix}


def table_from_section(cfg: dict, blobs: dict[str, np.ndarray]) -> EmbeddingTable:
    words = list(cfg["words"])
    matrix = blobs["matrix"].astype(np.float64)
    return EmbeddingTable(
        dim=int(cfg["dim"]),
        words=words,
        vocab={w: i for i, w in enumerate(words)},
        matrix=matrix,
    )


def index_to_section(index: GlobalTopicIndex) -> tuple[dict, dict[str, np.ndarray]]:
    cfg = {
        "m": index.m,
        "top_words": [[[w, float(c)] for w, c in tw] for tw in index.top_words],
    }
    return cfg, {"centers": index.centers,
                 "topic_embeddings": index.topic_embeddings}


def index_from_section(cfg: dict, blobs: dict[str, np.ndarray]) -> GlobalTopicIndex:
    return GlobalTopicIndex(
        centers=blobs["centers"].astype(np.float64),
        top_words=[[(w, float(c)) for w, c in tw] for tw in cfg["top_words"]],
        topic_embeddings=blobs["topic_embeddings"].astype(np.float64),
        m=int(cfg["m"]),
    )


@dataclass
class ModelBundle:
    vocab: Vocabulary
    table: EmbeddingTable | None = None
    optiongen_store: ParamStore | None = None
    optiongen_cfg: OptionGenConfig | None = None
    condlm_store: ParamStore | None = None
    condlm_cfg: CondLmConfig | None = None
    global_index: GlobalTopicIndex | None = None

    def to_checkpoint(self) -> Checkpoint:
        ck = Checkpoint(vocabulary=self.vocab.words[1:])  # UNK is implicit
        if self.table is not None:
            cfg, blobs = table_to_section(self.table)
            ck.config["embedding"] = cfg
            ck.sections["embedding"] = blobs
        if self.optiongen_store is not None:
            ck.config["optiongen"] = self.optiongen_cfg.to_dict()
            ck.sections["optiongen"] = store_to_blobs(self.optiongen_store)
        if self.condlm_store is not None:
            ck.config["condlm"] = self.condlm_cfg.to_dict()
            ck.sections["condlm"] = store_to_blobs(self.condlm_store)
        if self.global_index is not None:
            cfg, blobs = index_to_section(self.global_index)
            ck.config["global_index"] = cfg
            ck.sections["global_index"] = blobs
        return ck

    @classmethod
    def from_checkpoint(cls, ck: Checkpoint) -> "ModelBundle":
        known = {"embedding", "optiongen", "condlm", "global_index"}
        for section in ck.sections:
            if section not in known:
                raise UnknownSectionError(f"unknown section {section!r}")
        bundle = cls(vocab=Vocabulary(ck.vocabulary))
        if "embedding" in ck.sections:
            bundle.table = table_from_section(ck.config["embedding"],
                                              ck.sections["embedding"])
        if "optiongen" in ck.sections:
            bundle.optiongen_cfg = OptionGenConfig(**ck.config["optiongen"])
            bundle.optiongen_store = store_from_blobs(ck.sections["optiongen"])
        if "condlm" in ck.sections:
            bundle.condlm_cfg = CondLmConfig(**ck.config["condlm"])
            bundle.condlm_store = store_from_blobs(ck.sections["condlm"])
        if "global_index" in ck.sections:
            bundle.global_index = index_from_section(ck.config["global_index"],
                                                     ck.sections["global_index"])
        return bundle


_PUNCT_NO_SPACE_BEFORE = set(".,;:!?)]}'\"")
_PUNCT_NO_SPACE_AFTER = set("([{")


def render_text(tokens: list[str]) -> str:
    out: list[str] = []
    for tok in tokens:
        if out and not (tok in _PUNCT_NO_SPACE_BEFORE or
                        out[-1] in _PUNCT_NO_SPACE_AFTER):
            out.append(" ")
        out.append(tok)
    return "".join(out)


class Engine:
    """Frozen models behind the prompt-level operations used by the API."""

    def __init__(self, bundle: ModelBundle, stops: StopWordList | None = None,
                 m: int = 5):
        self.bundle = bundle
        self.stops = stops if stops is not None else StopWordList.default()
        self.m = m
        self.tokenizer = Tokenizer(bundle.vocab)
        self.traces: dict[str, list[int]] = {}

    @property
    def k(self) -> int:
        return self.bundle.optiongen_cfg.k

    def topics(self, prompt: str) -> list[TopicOption]:
        if not prompt.strip():
            raise EmptyPromptError("prompt must not be empty")
        seq = self.tokenizer.tokenize(prompt)
        if not seq.ids:
            raise EmptyPromptError("prompt contains no tokens")
        centers = optiongen_mod.predict_centers(
            self.bundle.optiongen_store, self.bundle.optiongen_cfg, seq.ids)
        return optiongen_mod.render_options(centers, self.bundle.table, self.m)

    def conditions_for(self, options: list[TopicOption], topic_ids: list[int],
                       words: list[str]) -> np.ndarray:
        budget = self.bundle.condlm_cfg.k_max
        if len(topic_ids) + len(words) > budget:
            raise ConditionBudgetError(len(topic_ids) + len(words), budget)
        for tid in topic_ids:
            if not isinstance(tid, int) or not 0 <= tid < len(options):
                raise UnknownTopicError(tid)
        oov = [w for w in words if w not in self.bundle.table]
        if oov:
            raise OovWordsError(oov)
        vecs = [options[tid].topic_embedding for tid in sorted(topic_ids)]
        vecs += [self.bundle.table.row(w) for w in words]
        if not vecs:
            return np.zeros((0, self.bundle.table.dim))
        return np.vstack(vecs)

    def generate(self, prompt: str, topic_ids: list[int], words: list[str],
                 max_tokens: int | None = None,
                 seed: int | None = None) -> dict:
        options = self.topics(prompt)
        conds = self.conditions_for(options, topic_ids, words)
        seq = self.tokenizer.tokenize(prompt)
        cfg = self.bundle.condlm_cfg
        max_tokens = cfg.max_tokens if max_tokens is None else max_tokens
        rng = np.random.default_rng(seed if seed is not None
                                    else np.random.SeedSequence().entropy)
        result = condlm_mod.generate(
            self.bundle.condlm_store, cfg, seq.ids, conds,
            max_tokens=max_tokens, k=cfg.topk, rng=rng)
        surfaces = [self.bundle.vocab.word_of(t) for t in result.tokens]
        trace_id = hashlib.sha256(
            repr((prompt, sorted(topic_ids), words, max_tokens, seed))
            .encode("utf-8")).hexdigest()[:16]
        self.traces[trace_id] = result.ranks
        return {
            "text": render_text(surfaces),
            "tokens": surfaces,
            "trace_id": trace_id,
        }

    def prompt_content_words(self, prompt: str) -> list[str]:
        seq = self.tokenizer.tokenize(prompt)
        return [s for s in seq.surfaces if is_content_word(s, self.stops)]
