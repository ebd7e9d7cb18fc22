"""Command-line entry points: data prep, training, inference, eval, serving."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .. import condlm as condlm_mod
from .. import optiongen as optiongen_mod
from ..clustering import build_global_index
from ..condlm import CondLmConfig
from ..corpus import (
    Corpus,
    CorpusConfig,
    StopWordList,
    Tokenizer,
    Vocabulary,
    sample_option_examples,
)
from ..embedspace import load_embeddings
from ..metrics import EvalConfig, eval_option_generators, eval_text_generator
from ..optiongen import OptionGenConfig
from .checkpoint import load_checkpoint, save_checkpoint
from .engine import Engine, ModelBundle
from .sessions import SessionStore


def _add_shared(p: argparse.ArgumentParser) -> None:
    p.add_argument("--corpus", type=Path, help="corpus file or directory")
    p.add_argument("--embeddings", type=Path, help="embedding text file")
    p.add_argument("--stopwords", type=Path, help="stop-word list override")
    p.add_argument("--checkpoint", type=Path, help="checkpoint path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", type=Path, help="JSON config overrides")


def _load_config(path: Path | None) -> dict:
    if path is None:
        return {}
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _load_stops(path: Path | None) -> StopWordList:
    return StopWordList.from_file(path) if path else StopWordList.default()


def _load_corpus(path: Path) -> Corpus:
    path = Path(path)
    if path.is_dir():
        return Corpus.from_dir(path)
    return Corpus.from_paths([path])


def _load_bundle(path: Path) -> ModelBundle:
    return ModelBundle.from_checkpoint(load_checkpoint(path))


def _merge_save(bundle_update, checkpoint_path: Path) -> None:
    """Write the bundle, carrying over sections already in the file."""
    if checkpoint_path.exists():
        existing = load_checkpoint(checkpoint_path)
        ck = bundle_update.to_checkpoint()
        for section, blobs in existing.sections.items():
            ck.sections.setdefault(section, blobs)
            if section in existing.config and section not in ck.config:
                ck.config[section] = existing.config[section]
        save_checkpoint(ck, checkpoint_path)
    else:
        save_checkpoint(bundle_update.to_checkpoint(), checkpoint_path)


def _corpus_cfg(overrides: dict) -> CorpusConfig:
    return CorpusConfig(**overrides.get("corpus", {}))


def _prepare(args, overrides):
    table = load_embeddings(args.embeddings)
    stops = _load_stops(args.stopwords)
    corpus = _load_corpus(args.corpus)
    vocab_cfg = overrides.get("vocab", {})
    vocab = Vocabulary.build(corpus.documents,
                             max_size=vocab_cfg.get("max_size", 50_000),
                             min_count=vocab_cfg.get("min_count", 1))
    tokenizer = Tokenizer(vocab)
    return table, stops, corpus, vocab, tokenizer


def cmd_make_toy_data(args) -> int:
    from ..toydata import ToyCorpusConfig, write_toy_dataset

    overrides = _load_config(args.config).get("toydata", {})
    cfg = ToyCorpusConfig(**{**overrides, "seed": args.seed})
    paths = write_toy_dataset(args.out, cfg)
    for name, p in paths.items():
        print(f"{name}: {p}")
    return 0


def cmd_train_options(args) -> int:
    overrides = _load_config(args.config)
    table, stops, corpus, vocab, tokenizer = _prepare(args, overrides)
    ccfg = _corpus_cfg(overrides)
    rng = np.random.default_rng(args.seed)
    examples = list(sample_option_examples(corpus, tokenizer, stops, ccfg, rng))
    og_cfg = OptionGenConfig(
        vocab_size=len(vocab), embed_dim=table.dim, seed=args.seed,
        **overrides.get("optiongen", {}))
    store, history = optiongen_mod.train_option_generator(
        examples, table, og_cfg, np.random.default_rng(args.seed))
    print(f"train loss per epoch: {history.train_loss}")
    bundle = ModelBundle(vocab=vocab, table=table, optiongen_store=store,
                         optiongen_cfg=og_cfg)
    _merge_save(bundle, args.checkpoint)
    print(f"saved: {args.checkpoint}")
    return 0


def cmd_train_lm(args) -> int:
    overrides = _load_config(args.config)
    table, stops, corpus, vocab, tokenizer = _prepare(args, overrides)
    ccfg = _corpus_cfg(overrides)
    rng = np.random.default_rng(args.seed)
    sequences = list(corpus.paragraphs(tokenizer, ccfg, rng))
    lm_cfg = CondLmConfig(
        vocab_size=len(vocab), embed_dim=table.dim, seed=args.seed,
        **overrides.get("condlm", {}))
    store, history = condlm_mod.train_conditional_lm(
        sequences, table, stops, lm_cfg, np.random.default_rng(args.seed),
        vocab=vocab)
    print(f"train loss per epoch: {history.train_loss}")
    bundle = ModelBundle(vocab=vocab, table=table, condlm_store=store,
                         condlm_cfg=lm_cfg)
    _merge_save(bundle, args.checkpoint)
    print(f"saved: {args.checkpoint}")
    return 0


def cmd_topics(args) -> int:
    engine = Engine(_load_bundle(args.checkpoint),
                    stops=_load_stops(args.stopwords), m=args.m)
    for i, opt in enumerate(engine.topics(args.prompt)):
        words = ", ".join(f"{w} ({c:.2f})" for w, c in opt.top_words)
        print(f"[{i}] {words}")
    return 0


def cmd_generate(args) -> int:
    engine = Engine(_load_bundle(args.checkpoint),
                    stops=_load_stops(args.stopwords))
    topic_ids = [int(x) for x in args.topics.split(",")] if args.topics else []
    words = args.words.split(",") if args.words else []
    out = engine.generate(args.prompt, topic_ids, words,
                          max_tokens=args.max_tokens, seed=args.seed)
    print(out["text"])
    return 0


def cmd_eval_options(args) -> int:
    from ..methods import (
        make_global_method,
        make_local_method,
        make_sample_global_method,
        make_trained_method,
    )

    overrides = _load_config(args.config)
    bundle = _load_bundle(args.checkpoint)
    table = bundle.table
    stops = _load_stops(args.stopwords)
    corpus = _load_corpus(args.corpus)
    tokenizer = Tokenizer(bundle.vocab)
    ccfg = _corpus_cfg(overrides)
    ecfg = EvalConfig(seed=args.seed, **overrides.get("eval", {}))
    rng = np.random.default_rng(args.seed)
    examples = list(sample_option_examples(corpus, tokenizer, stops, ccfg, rng))
    k = bundle.optiongen_cfg.k
    m = overrides.get("m", 5)
    j = overrides.get("global_j", 100)
    index = bundle.global_index
    if index is None:
        index = build_global_index(table, min(j, len(table) - 1), m,
                                   rng=np.random.default_rng(args.seed))
    methods = {
        "trained": make_trained_method(bundle.optiongen_store,
                                       bundle.optiongen_cfg, table, m),
        "kmeans-global": make_global_method(index, table, stops, k),
        "sample-global": make_sample_global_method(table, k, m, args.seed),
        "kmeans-local": make_local_method("kmeans", table, stops, k, m, args.seed),
        "nnsc-local": make_local_method("nnsc", table, stops, k, m, args.seed),
        "sample-local": make_local_method("sample", table, stops, k, m, args.seed),
    }
    report = eval_option_generators(methods, examples, table, stops, ecfg)
    print(report.to_text())
    if args.out:
        Path(args.out).write_text(report.to_json(), encoding="utf-8")
        print(f"wrote {args.out}")
    return 0


def cmd_eval_generator(args) -> int:
    from ..methods import make_sample_global_method, make_trained_method

    overrides = _load_config(args.config)
    bundle = _load_bundle(args.checkpoint)
    stops = _load_stops(args.stopwords)
    corpus = _load_corpus(args.corpus)
    tokenizer = Tokenizer(bundle.vocab)
    ccfg = _corpus_cfg(overrides)
    ecfg = EvalConfig(seed=args.seed, **overrides.get("eval", {}))
    rng = np.random.default_rng(args.seed)
    examples = list(sample_option_examples(corpus, tokenizer, stops, ccfg, rng))
    m = overrides.get("m", 5)
    if args.option_source == "trained":
        method = make_trained_method(bundle.optiongen_store,
                                     bundle.optiongen_cfg, bundle.table, m)
    else:
        method = make_sample_global_method(bundle.table,
                                           bundle.condlm_cfg.k_max, m, args.seed)
    report = eval_text_generator(
        bundle.condlm_store, bundle.condlm_cfg, method, examples,
        bundle.table, bundle.vocab, stops, ecfg, label="conditioned",
        use_conditions=True)
    eval_text_generator(
        bundle.condlm_store, bundle.condlm_cfg, method, examples,
        bundle.table, bundle.vocab, stops, ecfg, label="unconditioned",
        use_conditions=False, report=report)
    print(report.to_text())
    if args.out:
        Path(args.out).write_text(report.to_json(), encoding="utf-8")
        print(f"wrote {args.out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .api import create_app

    engine = Engine(_load_bundle(args.checkpoint),
                    stops=_load_stops(args.stopwords))
    sessions = SessionStore(engine, log_dir=args.sessions_dir)
    app = create_app(engine, sessions, ui_dir=args.ui)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="steertext",
        description="topic options and topic-steered text generation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-toy-data", help="write a synthetic topical corpus")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--config", type=Path)
    p.set_defaults(fn=cmd_make_toy_data)

    p = sub.add_parser("train-options", help="train the option generator")
    _add_shared(p)
    p.set_defaults(fn=cmd_train_options)

    p = sub.add_parser("train-lm", help="train the conditional language model")
    _add_shared(p)
    p.set_defaults(fn=cmd_train_lm)

    p = sub.add_parser("topics", help="predict K topics for a prompt")
    _add_shared(p)
    p.add_argument("--prompt", required=True)
    p.add_argument("--m", type=int, default=5)
    p.set_defaults(fn=cmd_topics)

    p = sub.add_parser("generate", help="generate a steered continuation")
    _add_shared(p)
    p.add_argument("--prompt", required=True)
    p.add_argument("--topics", default="", help="comma-separated topic ids")
    p.add_argument("--words", default="", help="comma-separated words")
    p.add_argument("--max-tokens", type=int, default=None)
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("eval-options", help="compare option generators")
    _add_shared(p)
    p.add_argument("--out", type=Path)
    p.set_defaults(fn=cmd_eval_options)

    p = sub.add_parser("eval-generator", help="evaluate steered generation")
    _add_shared(p)
    p.add_argument("--option-source", default="trained",
                   choices=["trained", "sample-global"])
    p.add_argument("--out", type=Path)
    p.set_defaults(fn=cmd_eval_generator)

    p = sub.add_parser("serve", help="run the HTTP API")
    _add_shared(p)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--ui", type=Path, help="static UI directory to mount")
    p.add_argument("--sessions-dir", type=Path, help="session event-log dir")
    p.set_defaults(fn=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
