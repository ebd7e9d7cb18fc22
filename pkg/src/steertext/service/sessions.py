"""Plot-tree sessions persisted as append-only event logs."""

from __future__ import annotations

import json
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from ..embedspace import TopicOption
from .engine import Engine


class UnknownSessionError(KeyError):
    pass


class UnknownNodeError(KeyError):
    pass


def option_to_json(opt: TopicOption) -> dict:
    return {
        "id": int(opt.source_id),
        "words": [{"w": w, "cos": float(c)} for w, c in opt.top_words],
        "t": [float(x) for x in opt.topic_embedding],
    }


@dataclass
class SessionNode:
    id: str
    parent: str | None
    text: str                      # full text from the root down to here
    new_text: str                  # the span this node added
    chosen_topics: list[int]
    chosen_words: list[str]
    options: list[dict]            # JSON form of the K options offered here


@dataclass
class SessionTree:
    id: str
    root_id: str
    nodes: dict[str, SessionNode] = field(default_factory=dict)

    def node(self, node_id: str) -> SessionNode:
        if node_id not in self.nodes:
            raise UnknownNodeError(node_id)
        return self.nodes[node_id]

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "root_id": self.root_id,
            "nodes": [
                {
                    "id": n.id,
                    "parent": n.parent,
                    "text": n.text,
                    "new_text": n.new_text,
                    "chosen_topics": n.chosen_topics,
                    "chosen_words": n.chosen_words,
                    "options": n.options,
                }
                for n in self.nodes.values()
            ],
        }


class SessionStore:
    """In-memory trees; every mutation is an appended JSON event.

    With a log directory, events replay on load, so a crash loses at most the
    event being written.
    """

    def __init__(self, engine: Engine, log_dir: Path | str | None = None):
        self.engine = engine
        self.log_dir = Path(log_dir) if log_dir is not None else None
        if self.log_dir is not None:
            self.log_dir.mkdir(parents=True, exist_ok=True)
        self.trees: dict[str, SessionTree] = {}
        self._counters: dict[str, int] = {}
        if self.log_dir is not None:
            for path in sorted(self.log_dir.glob("session-*.jsonl")):
                self._replay(path)

    def _log(self, session_id: str, event: dict) -> None:
        if self.log_dir is None:
            return
        path = self.log_dir / f"session-{session_id}.jsonl"
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, sort_keys=True) + "\n")

    def _replay(self, path: Path) -> None:
        for line in path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            self._apply(json.loads(line), log=False)

    def _apply(self, event: dict, log: bool = True) -> SessionNode:
        kind = event["type"]
        sid = event["session"]
        if kind == "create":
            tree = SessionTree(id=sid, root_id=event["node"])
            tree.nodes[event["node"]] = SessionNode(
                id=event["node"], parent=None, text=event["text"],
                new_text=event["text"], chosen_topics=[], chosen_words=[],
                options=event["options"],
            )
            self.trees[sid] = tree
            self._counters[sid] = 1
            node = tree.nodes[event["node"]]
        elif kind == "expand":
            tree = self.trees[sid]
            parent = tree.node(event["parent"])
            node = SessionNode(
                id=event["node"], parent=parent.id,
                text=parent.text + event["new_text"],
                new_text=event["new_text"],
                chosen_topics=list(event["chosen_topics"]),
                chosen_words=list(event["chosen_words"]),
                options=event["options"],
            )
            tree.nodes[node.id] = node
            self._counters[sid] = max(self._counters.get(sid, 0),
                                      int(node.id[1:]) + 1)
        else:
            raise ValueError(f"unknown event type {kind!r}")
        if log:
            self._log(sid, event)
        return node

    def _next_node_id(self, session_id: str) -> str:
        n = self._counters.get(session_id, 0)
        self._counters[session_id] = n + 1
        return f"n{n}"

    def create(self, prompt: str) -> SessionTree:
        options = self.engine.topics(prompt)
        sid = uuid.uuid4().hex[:12]
        event = {
            "type": "create",
            "session": sid,
            "node": "n0",
            "text": prompt,
            "options": [option_to_json(o) for o in options],
        }
        self._apply(event)
        return self.trees[sid]

    def get(self, session_id: str) -> SessionTree:
        if session_id not in self.trees:
            raise UnknownSessionError(session_id)
        return self.trees[session_id]

    def expand(self, session_id: str, node_id: str, topic_ids: list[int],
               words: list[str], max_tokens: int | None = None,
               seed: int | None = None) -> SessionNode:
        """Generate a continuation under the node's offered options.

        The child's prompt is the parent's full text; fresh options are
        computed for the child's extended text.
        """
        tree = self.get(session_id)
        parent = tree.node(node_id)
        options = [self._option_from_json(o) for o in parent.options]
        conds = self.engine.conditions_for(options, topic_ids, words)
        seq = self.engine.tokenizer.tokenize(parent.text)
        cfg = self.engine.bundle.condlm_cfg
        import numpy as np

        from .. import condlm as condlm_mod
        from .engine import render_text

        rng = np.random.default_rng(seed if seed is not None
                                    else np.random.SeedSequence().entropy)
        result = condlm_mod.generate(
            self.engine.bundle.condlm_store, cfg, seq.ids, conds,
            max_tokens=cfg.max_tokens if max_tokens is None else max_tokens,
            k=cfg.topk, rng=rng)
        surfaces = [self.engine.bundle.vocab.word_of(t) for t in result.tokens]
        new_text = " " + render_text(surfaces)
        child_options = self.engine.topics(parent.text + new_text)
        event = {
            "type": "expand",
            "session": session_id,
            "node": self._next_node_id(session_id),
            "parent": parent.id,
            "new_text": new_text,
            "chosen_topics": list(topic_ids),
            "chosen_words": list(words),
            "options": [option_to_json(o) for o in child_options],
        }
        return self._apply(event)

    @staticmethod
    def _option_from_json(data: dict) -> TopicOption:
        import numpy as np

        t = np.array(data["t"], dtype=np.float64)
        return TopicOption(
            center=t,
            top_words=[(d["w"], d["cos"]) for d in data["words"]],
            topic_embedding=t,
            source_id=int(data["id"]),
        )
