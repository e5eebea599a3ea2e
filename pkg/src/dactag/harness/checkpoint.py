"""Versioned binary checkpoint of named float64 tensors plus metadata.

Layout (all integers little-endian)::

    0       8 bytes   magic b"DACTAGCK"
    8       uint32    format version
    12      uint64    M, byte length of the metadata block
    20      M bytes   UTF-8 JSON: kind, stage, config, vocab, tags, tensors=[{name, shape}]
    20+M    ...       each tensor in metadata order, float64 LE, C order

The file must end exactly after the last tensor.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..corpus import TagSet, Vocabulary
from ..encoder import ParamStore
from ..errors import DataError
from .config import Config

MAGIC = b"DACTAGCK"
VERSION = 1
_HEADER = struct.Struct("<8sIQ")


def model_kind(config: Config) -> str:
    head = "crf" if config.model == "crf" else f"seq2seq-{config.attention}"
    return f"{config.encoder}+{head}"


@dataclass
class Checkpoint:
    config: Config
    vocab: Vocabulary
    tagset: TagSet
    tensors: dict[str, np.ndarray]
    stage: str = "train"
    extra: dict = field(default_factory=dict)

    @property
    def kind(self) -> str:
        return model_kind(self.config)

    @classmethod
    def from_model(cls, model, stage: str = "train", extra: dict | None = None) -> "Checkpoint":
        tensors = {k: p.value.copy() for k, p in model.params.items()}
        return cls(model.config, model.vocab, model.tagset, tensors, stage, dict(extra or {}))

    def build_model(self):
        from ..model import build_model

        store = ParamStore()
        for name, value in self.tensors.items():
            store.add(name, value.copy())
        return build_model(self.config, self.vocab, self.tagset, params=store)

    def to_bytes(self) -> bytes:
        meta = {
            "kind": self.kind,
            "stage": self.stage,
            "config": self.config.as_dict(),
            "vocab": self.vocab.words[2:],
            "min_count": self.vocab.min_count,
            "tags": self.tagset.tags,
            "extra": self.extra,
            "tensors": [{"name": k, "shape": list(v.shape)} for k, v in self.tensors.items()],
        }
        blob = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
        parts = [_HEADER.pack(MAGIC, VERSION, len(blob)), blob]
        parts += [np.ascontiguousarray(v, dtype="<f8").tobytes() for v in self.tensors.values()]
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes, where: str = "<checkpoint>") -> "Checkpoint":
        if len(data) < _HEADER.size:
            raise DataError(f"{where}: truncated header")
        magic, version, mlen = _HEADER.unpack_from(data)
        if magic != MAGIC:
            raise DataError(f"{where}: not a checkpoint (bad magic)")
        if version != VERSION:
            raise DataError(f"{where}: unsupported checkpoint version {version}")
        off = _HEADER.size
        try:
            meta = json.loads(data[off : off + mlen].decode("utf-8"))
            config = Config(**meta["config"])
            vocab = Vocabulary(meta["vocab"], meta.get("min_count", 1))
            tagset = TagSet(meta["tags"])
            specs = meta["tensors"]
        except (ValueError, KeyError, TypeError) as exc:
            raise DataError(f"{where}: bad metadata ({exc})") from None
        off += mlen
        tensors = {}
        for spec in specs:
            shape = tuple(int(d) for d in spec["shape"])
            nbytes = 8 * int(np.prod(shape, dtype=np.int64))
            if off + nbytes > len(data):
                raise DataError(f"{where}: truncated tensor {spec['name']!r}")
            tensors[spec["name"]] = np.frombuffer(data, "<f8", nbytes // 8, off).reshape(shape).astype(np.float64)
            off += nbytes
        if off != len(data):
            raise DataError(f"{where}: {len(data) - off} trailing bytes")
        return cls(config, vocab, tagset, tensors, meta.get("stage", "train"), meta.get("extra", {}))

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "Checkpoint":
        path = Path(path)
        if not path.exists():
            raise DataError(f"{path}: no such checkpoint")
        return cls.from_bytes(path.read_bytes(), str(path))

    def describe(self) -> str:
        lines = [f"kind\t{self.kind}", f"stage\t{self.stage}", f"format\t{VERSION}",
                 f"vocab\t{len(self.vocab)}", f"tags\t{' '.join(self.tagset.tags)}"]
        total = 0
        for name, v in self.tensors.items():
            lines.append(f"tensor\t{name}\t{'x'.join(map(str, v.shape))}")
            total += v.size
        lines.append(f"parameters\t{total}")
        lines += [f"config\t{line}" for line in self.config.to_text().splitlines()]
        return "\n".join(lines) + "\n"


def save_checkpoint(model, path, stage: str = "train", extra: dict | None = None) -> Checkpoint:
    ckpt = Checkpoint.from_model(model, stage, extra)
    ckpt.save(path)
    return ckpt


def load_checkpoint(path) -> Checkpoint:
    return Checkpoint.load(path)
