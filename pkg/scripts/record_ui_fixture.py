"""Record the steering-flow HTTP exchange against a live app for UI replay.

Builds a small deterministic engine, drives the exact request sequence the
frontend contract test replays, and writes request/response pairs as JSON.
"""

import json
import sys
from pathlib import Path

import numpy as np
from fastapi.testclient import TestClient

from steertext import condlm as condlm_mod
from steertext import optiongen as og
from steertext.condlm import CondLmConfig
from steertext.corpus import StopWordList, Vocabulary
from steertext.embedspace import EmbeddingTable
from steertext.optiongen import OptionGenConfig
from steertext.service.api import create_app
from steertext.service.engine import Engine, ModelBundle
from steertext.service.sessions import SessionStore

K = 10


def build_engine() -> Engine:
    rng = np.random.default_rng(12)
    words = [f"w{i}" for i in range(40)] + ["the", "a", "."]
    matrix = rng.normal(size=(len(words), 16))
    matrix /= np.linalg.norm(matrix, axis=1, keepdims=True)
    table = EmbeddingTable(dim=16, words=words,
                           vocab={w: i for i, w in enumerate(words)},
                           matrix=matrix)
    vocab = Vocabulary(words)
    og_cfg = OptionGenConfig(vocab_size=len(vocab), embed_dim=16, k=K,
                             width=16, n_heads=2, encoder_layers=1,
                             decoder_layers=1, context=64, dtype="float32")
    lm_cfg = CondLmConfig(vocab_size=len(vocab), embed_dim=16, width=16,
                          n_heads=2, n_layers=1, context=96, k_max=K,
                          topk=10, max_tokens=8, dtype="float32")
    bundle = ModelBundle(
        vocab=vocab,
        table=table,
        optiongen_store=og.init_option_generator(og_cfg,
                                                 np.random.default_rng(5)),
        optiongen_cfg=og_cfg,
        condlm_store=condlm_mod.init_cond_lm(lm_cfg, np.random.default_rng(6)),
        condlm_cfg=lm_cfg,
    )
    return Engine(bundle, stops=StopWordList(["the", "a", "."]), m=3)


def main(out_path: str) -> None:
    engine = build_engine()
    client = TestClient(create_app(engine, SessionStore(engine)))
    prompt = "w1 w2 w3 w4"
    records = []

    def hit(method: str, path: str, body=None):
        if method == "POST":
            res = client.post(path, json=body)
        else:
            res = client.get(path)
        assert res.status_code == 200, (path, res.status_code, res.text)
        records.append({
            "request": {"method": method, "path": path, "body": body},
            "response": res.json(),
        })
        return res.json()

    session = hit("POST", "/v1/sessions", {"prompt": prompt})
    sid = session["id"]
    root_text = session["nodes"][0]["text"]
    hit("POST", "/v1/topics", {"prompt": root_text})
    child = hit("POST", f"/v1/sessions/{sid}/nodes/n0/expand",
                {"topic_ids": [0, 2], "words": ["w5"], "seed": 7})
    hit("POST", "/v1/topics", {"prompt": child["text"]})

    fixture = {"k": K, "prompt": prompt, "exchanges": records}
    Path(out_path).parent.mkdir(parents=True, exist_ok=True)
    Path(out_path).write_text(json.dumps(fixture, indent=1, sort_keys=True),
                              encoding="utf-8")
    print(f"wrote {out_path} ({len(records)} exchanges)")


if __name__ == "__main__":
    out = sys.argv[1] if len(sys.argv) > 1 else \
        "frontend/tests/fixtures/steering_flow.json"
    main(out)
