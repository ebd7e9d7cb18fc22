"""Corpus ingestion: tokenization, stop-word filtering, and example sampling."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

# Unicode word runs, or single non-space symbols (punctuation etc.)
_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)
_WORDCHAR_RE = re.compile(r"\w", re.UNICODE)

UNK = "<unk>"
UNK_ID = 0


def split_text(text: str) -> tuple[list[str], list[tuple[int, int]]]:
    """Split into word/punctuation tokens with (start, end) character offsets."""
    surfaces, offsets = [], []
    for m in _TOKEN_RE.finditer(text):
        surfaces.append(m.group(0))
        offsets.append((m.start(), m.end()))
    return surfaces, offsets


@dataclass
class TokenSeq:
    ids: list[int]
    surfaces: list[str]
    offsets: list[tuple[int, int]]

    def __len__(self) -> int:
        return len(self.ids)

    def slice(self, start: int, stop: int | None = None) -> "TokenSeq":
        sl = slice(start, stop)
        return TokenSeq(self.ids[sl], self.surfaces[sl], self.offsets[sl])


def detokenize(seq: TokenSeq, source: str) -> str:
    """Rebuild the source string from token surfaces plus original separators."""
    out = []
    prev_end = 0
    for surface, (start, end) in zip(seq.surfaces, seq.offsets):
        out.append(source[prev_end:start])
        out.append(surface)
        prev_end = end
    out.append(source[prev_end:])
    return "".join(out)


class Vocabulary:
    """Surface-form to id mapping with a reserved UNK slot at id 0."""

    def __init__(self, words: Iterable[str]):
        self.words: list[str] = [UNK]
        self.index: dict[str, int] = {UNK: UNK_ID}
        for w in words:
            if w not in self.index:
                self.index[w] = len(self.words)
                self.words.append(w)

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word in self.index

    def id_of(self, word: str) -> int:
        return self.index.get(word, UNK_ID)

    def word_of(self, idx: int) -> str:
        return self.words[idx]

    @classmethod
    def build(cls, texts: Iterable[str], max_size: int = 50_000,
              min_count: int = 1) -> "Vocabulary":
        from collections import Counter

        counts: Counter[str] = Counter()
        for text in texts:
            surfaces, _ = split_text(text)
            counts.update(surfaces)
        kept = [w for w, c in counts.most_common(max_size - 1) if c >= min_count]
        return cls(kept)


class Tokenizer:
    def __init__(self, vocab: Vocabulary):
        self.vocab = vocab

    def tokenize(self, text: str) -> TokenSeq:
        surfaces, offsets = split_text(text)
        ids = [self.vocab.id_of(s) for s in surfaces]
        return TokenSeq(ids, surfaces, offsets)


class StopWordList:
    def __init__(self, entries: Iterable[str], case_folded: bool = True):
        self.case_folded = case_folded
        self.entries: set[str] = set()
        for e in entries:
            self.entries.add(e.casefold() if case_folded else e)

    def __contains__(self, word: str) -> bool:
        return (word.casefold() if self.case_folded else word) in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    @classmethod
    def from_file(cls, path, case_folded: bool = True) -> "StopWordList":
        entries = []
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            entries.append(line)
        return cls(entries, case_folded)

    @classmethod
    def default(cls) -> "StopWordList":
        ref = resources.files("steertext.data").joinpath("stopwords_en.txt")
        with resources.as_file(ref) as path:
            return cls.from_file(path)


def is_content_word(surface: str, stops: StopWordList) -> bool:
    return bool(_WORDCHAR_RE.search(surface)) and surface not in stops


def extract_content_words(tokens, stops: StopWordList, limit: int) -> list[str]:
    """First `limit` non-stop word tokens, source order preserved.

    Accepts a TokenSeq or a plain surface list. Pure punctuation never counts
    as content.
    """
    if limit < 0:
        raise ValueError("limit must be >= 0")
    surfaces = tokens.surfaces if isinstance(tokens, TokenSeq) else tokens
    out = []
    for s in surfaces:
        if len(out) >= limit:
            break
        if is_content_word(s, stops):
            out.append(s)
    return out


@dataclass
class CorpusConfig:
    """Sampling-scheme knobs; defaults are the full-scale values."""
    paragraph_len: int = 512
    first_prompt_min: int = 1
    first_prompt_max: int = 199
    prompt_stride: int = 200
    positives: int = 50
    window_o: int = 25


@dataclass
class PromptContinuationExample:
    prompt: TokenSeq
    positives: list[str]
    continuation_window: list[str]
    paragraph: TokenSeq
    prompt_len: int
    first_in_paragraph: bool
    paragraph_index: int


@dataclass
class SkipStats:
    short_paragraphs: int = 0
    empty_positives: int = 0


class Corpus:
    """Plain-text documents: one per file, or blank-line-separated."""

    def __init__(self, documents: list[str]):
        self.documents = documents

    @classmethod
    def from_paths(cls, paths: Iterable[Path | str]) -> "Corpus":
        docs = []
        for p in paths:
            text = Path(p).read_text(encoding="utf-8")
            for chunk in re.split(r"\n\s*\n", text):
                chunk = chunk.strip()
                if chunk:
                    docs.append(chunk)
        return cls(docs)

    @classmethod
    def from_dir(cls, directory: Path | str, pattern: str = "*.txt") -> "Corpus":
        paths = sorted(Path(directory).glob(pattern))
        if not paths:
            raise FileNotFoundError(f"no {pattern} files under {directory}")
        return cls.from_paths(paths)

    def paragraphs(
        self,
        tokenizer: Tokenizer,
        cfg: CorpusConfig,
        rng: np.random.Generator,
        stats: SkipStats | None = None,
    ) -> Iterator[TokenSeq]:
        """Token windows of cfg.paragraph_len sampled from each document.

        Documents shorter than the window but at least half of it are kept
        whole; genuinely short ones are skipped and counted.
        """
        for doc in self.documents:
            seq = tokenizer.tokenize(doc)
            n = len(seq)
            if n >= cfg.paragraph_len:
                n_windows = n // cfg.paragraph_len
                starts = rng.integers(0, n - cfg.paragraph_len + 1, size=n_windows)
                for s in sorted(int(x) for x in starts):
                    yield seq.slice(s, s + cfg.paragraph_len)
            elif n >= cfg.paragraph_len // 2:
                yield seq
            else:
                if stats is not None:
                    stats.short_paragraphs += 1


def prompt_lengths(paragraph_len: int, cfg: CorpusConfig,
                   rng: np.random.Generator) -> list[int]:
    """Nested prompt sizes: first uniform in the configured range, then +stride."""
    first = int(rng.integers(cfg.first_prompt_min, cfg.first_prompt_max + 1))
    lengths = []
    size = first
    while size < paragraph_len:
        lengths.append(size)
        size += cfg.prompt_stride
    return lengths


def sample_option_examples(
    corpus: Corpus,
    tokenizer: Tokenizer,
    stops: StopWordList,
    cfg: CorpusConfig,
    rng: np.random.Generator,
    stats: SkipStats | None = None,
) -> Iterator[PromptContinuationExample]:
    """Training/eval examples: nested prompt prefixes with future content words.

    Within each paragraph the prompts are strict prefixes of each other; each
    example's positives are the next <=cfg.positives content words after its
    prompt, and its window the next cfg.window_o content words.
    """
    stats = stats if stats is not None else SkipStats()
    for par_idx, paragraph in enumerate(corpus.paragraphs(tokenizer, cfg, rng, stats)):
        lengths = prompt_lengths(len(paragraph), cfg, rng)
        for j, plen in enumerate(lengths):
            rest = paragraph.surfaces[plen:]
            positives = extract_content_words(rest, stops, cfg.positives)
            if not positives:
                stats.empty_positives += 1
                continue
            window = positives[: cfg.window_o]
            yield PromptContinuationExample(
                prompt=paragraph.slice(0, plen),
                positives=positives,
                continuation_window=window,
                paragraph=paragraph,
                prompt_len=plen,
                first_in_paragraph=(j == 0),
                paragraph_index=par_idx,
            )


def sample_condition_words(
    window: list[str],
    k_max: int,
    rng: np.random.Generator,
) -> tuple[int, list[str]]:
    """Draw n uniform on {0..k_max}, then n distinct words from the window.

    The window is deduplicated (first occurrence wins) before drawing, so the
    result never repeats a word; an empty window forces n = 0.
    """
    uniq = list(dict.fromkeys(window))
    if not uniq:
        return 0, []
    n = int(rng.integers(0, k_max + 1))
    take = min(n, len(uniq))
    if take == 0:
        return n, []
    picked = rng.choice(len(uniq), size=take, replace=False)
    return n, [uniq[i] for i in picked]
