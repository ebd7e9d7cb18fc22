"""Single-file checkpoint container.

Layout: 8-byte magic, little-endian uint32 version, uint64 header length, a
JSON header (config, vocabulary, blob directory with byte offsets), then raw
little-endian float32 blobs. The header is plain text on purpose: a checkpoint
can be inspected with `head` and diffed.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"STEERTXT"
VERSION = 1


class CheckpointError(Exception):
    pass


class MagicMismatchError(CheckpointError):
    pass


class VersionMismatchError(CheckpointError):
    pass


class TruncatedCheckpointError(CheckpointError):
    pass


class HeaderFormatError(CheckpointError):
    pass


class UnknownSectionError(CheckpointError):
    pass


@dataclass
class Checkpoint:
    config: dict = field(default_factory=dict)
    vocabulary: list[str] = field(default_factory=list)
    sections: dict[str, dict[str, np.ndarray]] = field(default_factory=dict)

    def blobs(self, section: str) -> dict[str, np.ndarray]:
        if section not in self.sections:
            raise UnknownSectionError(f"checkpoint has no section {section!r}")
        return self.sections[section]


def save_checkpoint(ck: Checkpoint, path: Path | str) -> None:
    payload_parts: list[bytes] = []
    directory = []
    offset = 0
    for section in sorted(ck.sections):
        for name in sorted(ck.sections[section]):
            arr = np.ascontiguousarray(ck.sections[section][name], dtype="<f4")
            raw = arr.tobytes()
            directory.append({
                "section": section,
                "name": name,
                "shape": list(arr.shape),
                "offset": offset,
                "length": len(raw),
            })
            payload_parts.append(raw)
            offset += len(raw)
    header = json.dumps(
        {"config": ck.config, "vocabulary": ck.vocabulary, "blobs": directory},
        sort_keys=True,
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for part in payload_parts:
            fh.write(part)


def load_checkpoint(path: Path | str) -> Checkpoint:
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) + 12:
        raise TruncatedCheckpointError("file shorter than the fixed header")
    if raw[: len(MAGIC)] != MAGIC:
        raise MagicMismatchError(
            f"bad magic {raw[:len(MAGIC)]!r}, expected {MAGIC!r}"
        )
    pos = len(MAGIC)
    (version,) = struct.unpack_from("<I", raw, pos)
    pos += 4
    if version != VERSION:
        raise VersionMismatchError(f"version {version}, expected {VERSION}")
    (header_len,) = struct.unpack_from("<Q", raw, pos)
    pos += 8
    if pos + header_len > len(raw):
        raise TruncatedCheckpointError("header extends past end of file")
    try:
        header = json.loads(raw[pos:pos + header_len].decode("utf-8"))
        config = header["config"]
        vocabulary = header["vocabulary"]
        directory = header["blobs"]
    except (ValueError, KeyError, UnicodeDecodeError) as exc:
        raise HeaderFormatError(f"unreadable header: {exc}") from None
    payload = raw[pos + header_len:]
    sections: dict[str, dict[str, np.ndarray]] = {}
    for entry in directory:
        try:
            section, name = entry["section"], entry["name"]
            shape = tuple(int(x) for x in entry["shape"])
            offset, length = int(entry["offset"]), int(entry["length"])
        except (KeyError, TypeError, ValueError) as exc:
            raise HeaderFormatError(f"bad blob entry {entry!r}: {exc}") from None
        expected = int(np.prod(shape, dtype=np.int64)) * 4
        if length != expected:
            raise HeaderFormatError(
                f"blob {section}/{name}: length {length} != shape product {expected}"
            )
        if offset + length > len(payload):
            raise TruncatedCheckpointError(
                f"blob {section}/{name} extends past end of file"
            )
        arr = np.frombuffer(payload, dtype="<f4", count=length // 4,
                            offset=offset).reshape(shape).copy()
        sections.setdefault(section, {})[name] = arr
    return Checkpoint(config=config, vocabulary=vocabulary, sections=sections)
