"""Automatic evaluation metrics and the two comparison pipelines."""

from __future__ import annotations

import math
import time
import json
import warnings
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .corpus import (
    PromptContinuationExample,
    StopWordList,
    extract_content_words,
    is_content_word,
)
from .embedspace import EmbeddingTable, TopicOption


@dataclass
class ContentWordSet:
    words: list[str]
    matrix: np.ndarray          # [n_in_vocab, d]
    oov: list[str]
    role: str = "continuation"

    @classmethod
    def from_words(cls, table: EmbeddingTable, words: list[str],
                   role: str = "continuation") -> "ContentWordSet":
        matrix, oov = table.rows(words)
        return cls(words=list(words), matrix=matrix, oov=oov, role=role)


@dataclass
class RelevancyHits:
    token: int
    word: int
    topic: int


def _topic_matrix(topics: list[TopicOption]) -> np.ndarray:
    return np.vstack([t.topic_embedding for t in topics])


def sim(topics: list[TopicOption], words: ContentWordSet) -> float:
    """Sum over content words of the best topic-embedding cosine."""
    if words.matrix.shape[0] == 0:
        warnings.warn("sim over an empty word set; returning 0")
        return 0.0
    t = _topic_matrix(topics)
    return float((words.matrix @ t.T).max(axis=1).sum())


def sim_diff(topics: list[TopicOption], continuation: ContentWordSet,
             prompt: ContentWordSet) -> float:
    return sim(topics, continuation) - sim(topics, prompt)


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _modified_precision(candidate: list[str], reference: list[str],
                        n: int) -> tuple[int, int]:
    cand = _ngrams(candidate, n)
    ref = _ngrams(reference, n)
    numer = sum(min(c, ref[g]) for g, c in cand.items())
    denom = max(1, len(candidate) - n + 1)
    return numer, denom


def bleu2(candidate: list[str], reference: list[str]) -> float:
    """BLEU-2 with brevity penalty; zero-match orders get geometric smoothing.

    The first zero-match order replaces its precision numerator by 1/2, the
    next by 1/4, and so on; everything else is the standard clipped-precision
    geometric mean.
    """
    if not candidate:
        return 0.0
    log_sum = 0.0
    invcnt = 1
    for n in (1, 2):
        numer, denom = _modified_precision(candidate, reference, n)
        if numer == 0:
            p = 1.0 / (2**invcnt * denom)
            invcnt += 1
        else:
            p = numer / denom
        log_sum += 0.5 * math.log(p)
    c, r = len(candidate), len(reference)
    bp = 1.0 if c > r else math.exp(1.0 - r / c)
    return bp * math.exp(log_sum)


def bleu_diff(generation: list[str], continuation: list[str],
              prompt: list[str]) -> float:
    return bleu2(generation, continuation) - bleu2(generation, prompt)


def _fold(word: str) -> str:
    return word.casefold()


def word_hit(topics: list[TopicOption], generation: list[str]) -> int:
    """Unique topic-word types mentioned anywhere in the generation."""
    topic_words = {_fold(w) for t in topics for w in t.words}
    gen_types = {_fold(w) for w in generation}
    return len(topic_words & gen_types)


def relevancy_hits(topics: list[TopicOption],
                   generation: list[str]) -> RelevancyHits:
    """Exact (case-folded) matches against the topics' top words.

    token counts matching occurrences, word counts matched types, and topic
    counts topics with a matched word. Each matched type is claimed by one
    topic so that token >= word >= topic always holds, even when topics share
    top words.
    """
    topic_sets = [{_fold(w) for w in t.words} for t in topics]
    union = set().union(*topic_sets) if topic_sets else set()
    gen_folded = [_fold(w) for w in generation]
    token_hits = sum(1 for w in gen_folded if w in union)
    matched = {w for w in gen_folded if w in union}
    claimed: set[str] = set()
    topic_hits = 0
    for s in topic_sets:
        free = sorted((s & matched) - claimed)
        if free:
            claimed.add(free[0])
            topic_hits += 1
    return RelevancyHits(token=token_hits, word=len(matched), topic=topic_hits)


def self_bleu(generations: list[list[str]]) -> float:
    """Mean BLEU-2 over all ordered pairs of distinct generations."""
    if len(generations) < 2:
        raise ValueError("self_bleu needs at least two generations")
    scores = [
        bleu2(generations[i], generations[j])
        for i in range(len(generations))
        for j in range(len(generations))
        if i != j
    ]
    return float(np.mean(scores))


def dist_n(generations: list[list[str]], n: int) -> float:
    """Unique-to-total n-gram percentage, pooled over one paragraph's samples."""
    total = 0
    uniq: set[tuple[str, ...]] = set()
    for g in generations:
        total += max(0, len(g) - n + 1)
        uniq.update(tuple(g[i:i + n]) for i in range(len(g) - n + 1))
    if total == 0:
        return 0.0
    return 100.0 * len(uniq) / total


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

@dataclass
class EvalReport:
    rows: dict[str, dict[str, float]] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def add(self, method: str, metric: str, value: float) -> None:
        self.rows.setdefault(method, {})[metric] = float(value)

    def get(self, method: str, metric: str) -> float:
        return self.rows[method][metric]

    def to_records(self) -> list[dict]:
        return [
            {"method": m, "metric": k, "value": v}
            for m in self.rows
            for k, v in self.rows[m].items()
        ]

    def to_json(self) -> str:
        return json.dumps({"rows": self.rows, "meta": self.meta}, sort_keys=True)

    @classmethod
    def from_json(cls, payload: str) -> "EvalReport":
        data = json.loads(payload)
        return cls(rows=data["rows"], meta=data.get("meta", {}))

    def to_text(self) -> str:
        metrics = sorted({k for row in self.rows.values() for k in row})
        name_w = max([len(m) for m in self.rows] + [6])
        header = "method".ljust(name_w) + "  " + "  ".join(
            f"{k:>12}" for k in metrics)
        lines = [header, "-" * len(header)]
        for m in self.rows:
            cells = []
            for k in metrics:
                v = self.rows[m].get(k)
                cells.append(f"{v:12.4f}" if v is not None else " " * 12)
            lines.append(m.ljust(name_w) + "  " + "  ".join(cells))
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# evaluation pipelines
# ---------------------------------------------------------------------------

@dataclass
class EvalConfig:
    o_prime: int = 25
    trim_boundary_tokens: bool = True
    samples_per_prompt: int = 3
    max_tokens: int = 50
    topk: int = 40
    seed: int = 0


def continuation_words(example: PromptContinuationExample, stops: StopWordList,
                       cfg: EvalConfig) -> list[str]:
    rest = example.paragraph.surfaces[example.prompt_len:]
    if cfg.trim_boundary_tokens and rest:
        rest = rest[1:]
    return extract_content_words(rest, stops, cfg.o_prime)


def prompt_content_words(example: PromptContinuationExample, stops: StopWordList,
                         cfg: EvalConfig) -> list[str]:
    surfaces = example.prompt.surfaces
    if cfg.trim_boundary_tokens and surfaces:
        surfaces = surfaces[:-1]
    return [s for s in surfaces if is_content_word(s, stops)]


def eval_option_generators(
    methods: dict[str, callable],
    examples: list[PromptContinuationExample],
    table: EmbeddingTable,
    stops: StopWordList,
    cfg: EvalConfig,
) -> EvalReport:
    """Sim / Sim Short / Sim Diff per method over a shared prompt set.

    Prompts whose continuation is shorter than O' content words are skipped,
    as are prompts any method cannot handle, so every mean covers the same
    examples.
    """
    from .clustering import ShortPromptError

    per_method: dict[str, dict[str, list[float]]] = {
        name: {"sim": [], "sim_short": [], "sim_diff": [], "secs": []}
        for name in methods
    }
    used = 0
    skipped_short = 0
    skipped_method = 0
    for example in examples:
        cont = continuation_words(example, stops, cfg)
        if len(cont) < cfg.o_prime:
            skipped_short += 1
            continue
        prompt_words = prompt_content_words(example, stops, cfg)
        cont_set = ContentWordSet.from_words(table, cont, "continuation")
        prompt_set = ContentWordSet.from_words(table, prompt_words, "prompt")
        if cont_set.matrix.shape[0] == 0:
            skipped_short += 1
            continue
        options_by_method = {}
        try:
            for name, method in methods.items():
                t0 = time.perf_counter()
                options_by_method[name] = method(example)
                per_method[name]["secs"].append(time.perf_counter() - t0)
        except ShortPromptError:
            skipped_method += 1
            for name in options_by_method:
                per_method[name]["secs"].pop()
            continue
        used += 1
        for name, options in options_by_method.items():
            s = sim(options, cont_set)
            per_method[name]["sim"].append(s)
            per_method[name]["sim_diff"].append(s - sim(options, prompt_set))
            if example.first_in_paragraph:
                per_method[name]["sim_short"].append(s)

    report = EvalReport(meta={
        "prompts": used,
        "skipped_short_continuation": skipped_short,
        "skipped_short_prompt": skipped_method,
    })
    for name, vals in per_method.items():
        for metric, series in vals.items():
            key = {"secs": "secs_per_prompt"}.get(metric, metric)
            report.add(name, key, float(np.mean(series)) if series else float("nan"))
    return report


def eval_text_generator(
    lm_store,
    lm_cfg,
    option_method,
    examples: list[PromptContinuationExample],
    table: EmbeddingTable,
    vocab,
    stops: StopWordList,
    cfg: EvalConfig,
    label: str = "conditioned",
    use_conditions: bool = True,
    score_ppl: bool = True,
    report: EvalReport | None = None,
) -> EvalReport:
    """Generate steered samples per prompt and score relevancy and quality.

    Per prompt: draw n in [1, K] topics from the option source, generate
    samples (conditioned or not; topic draws and sampler seeds are identical
    either way), then score hits against the chosen topics, BLEU against the
    true continuation, diversity, and perplexity under this model run
    unconditioned.
    """
    from . import condlm
    from .clustering import ShortPromptError

    series: dict[str, list[float]] = {k: [] for k in (
        "hit_token", "hit_word", "hit_topic", "bleu", "bleu_diff", "word_hit",
        "self_bleu", "dist1", "dist2", "ppl", "secs_per_prompt")}
    used = 0
    skipped = 0
    for idx, example in enumerate(examples):
        cont = continuation_words(example, stops, cfg)
        if len(cont) < cfg.o_prime:
            skipped += 1
            continue
        try:
            options = option_method(example)
        except ShortPromptError:
            skipped += 1
            continue
        draw_rng = np.random.default_rng((cfg.seed, 17, idx))
        n = int(draw_rng.integers(1, len(options) + 1))
        chosen_idx = sorted(draw_rng.choice(len(options), size=n, replace=False))
        chosen = [options[int(i)] for i in chosen_idx]
        conds = np.vstack([t.topic_embedding for t in chosen]) \
            if use_conditions else np.zeros((0, table.dim))
        prompt_ids = example.prompt.ids
        sample_ids: list[list[int]] = []
        t0 = time.perf_counter()
        for s in range(cfg.samples_per_prompt):
            gen_rng = np.random.default_rng((cfg.seed, 29, idx, s))
            out = condlm.generate(lm_store, lm_cfg, prompt_ids, conds,
                                  max_tokens=cfg.max_tokens, k=cfg.topk,
                                  rng=gen_rng)
            sample_ids.append(out.tokens)
        series["secs_per_prompt"].append(time.perf_counter() - t0)
        used += 1
        samples = [[vocab.word_of(t) for t in ids_] for ids_ in sample_ids]

        per_sample = [relevancy_hits(chosen, s) for s in samples]
        series["hit_token"].append(float(np.mean([h.token for h in per_sample])))
        series["hit_word"].append(float(np.mean([h.word for h in per_sample])))
        series["hit_topic"].append(float(np.mean([h.topic for h in per_sample])))
        prompt_words = prompt_content_words(example, stops, cfg)
        series["bleu"].append(float(np.mean([bleu2(s, cont) for s in samples])))
        series["bleu_diff"].append(float(np.mean(
            [bleu_diff(s, cont, prompt_words) for s in samples])))
        series["word_hit"].append(float(np.mean(
            [word_hit(options, s) for s in samples])))
        if len(samples) >= 2:
            series["self_bleu"].append(self_bleu(samples))
        series["dist1"].append(dist_n(samples, 1))
        series["dist2"].append(dist_n(samples, 2))
        if score_ppl:
            vals = [condlm.perplexity(lm_store, lm_cfg, ids_, prompt_ids)
                    for ids_ in sample_ids if ids_]
            if vals:
                series["ppl"].append(float(np.mean(vals)))

    out_report = report if report is not None else EvalReport()
    out_report.meta[f"{label}_prompts"] = used
    out_report.meta[f"{label}_skipped"] = skipped
    scale = {"bleu": 100.0, "bleu_diff": 100.0, "self_bleu": 100.0}
    for metric, vals in series.items():
        value = float(np.mean(vals)) * scale.get(metric, 1.0) if vals \
            else float("nan")
        out_report.add(label, metric, value)
    return out_report
