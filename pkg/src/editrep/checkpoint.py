"""Self-contained binary model checkpoints.

Layout: an 8-byte magic string, a little-endian uint64 header length, a JSON
header (model config, seed, both vocabularies with their content hashes, and
a parameter manifest of names and shapes), then the raw float32 parameter
blocks concatenated in manifest order, little-endian.  Embedding the token
lists makes a checkpoint loadable with no side files.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Any

import numpy as np

from .corpus import Vocabulary
from .model import EditModel, ModelConfig

MAGIC = b"EVECKPT1"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    """Malformed file, manifest mismatch, or truncated parameter data."""


def save_checkpoint(path: str | Path, model: EditModel,
                    extra: dict[str, Any] | None = None) -> None:
    params = model.parameters()
    header = {
        "format": FORMAT_VERSION,
        "config": model.config.to_dict(),
        "seed": model.seed,
        "src_vocab": {"tokens": model.src_vocab.tokens,
                      "hash": model.src_vocab.content_hash()},
        "tgt_vocab": {"tokens": model.tgt_vocab.tokens,
                      "hash": model.tgt_vocab.content_hash()},
        "manifest": [{"name": p.name, "shape": list(p.data.shape)}
                     for p in params],
        "extra": extra or {},
    }
    blob = json.dumps(header, ensure_ascii=False, sort_keys=True).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for p in params:
            fh.write(np.ascontiguousarray(p.data, dtype="<f4").tobytes())


def read_header(path: str | Path) -> dict[str, Any]:
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise CheckpointError(f"{path}: bad magic {magic!r}")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        try:
            return json.loads(fh.read(hlen).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as err:
            raise CheckpointError(f"{path}: unreadable header: {err}") from err


def load_checkpoint(path: str | Path) -> tuple[EditModel, dict[str, Any]]:
    """Rebuild the model (config, vocabularies, weights) from one file."""
    path = Path(path)
    header = read_header(path)
    if header.get("format") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format {header.get('format')}")
    config = ModelConfig.from_dict(header["config"])
    src_vocab = Vocabulary(header["src_vocab"]["tokens"])
    tgt_vocab = Vocabulary(header["tgt_vocab"]["tokens"])
    for side, vocab in (("src_vocab", src_vocab), ("tgt_vocab", tgt_vocab)):
        want = header[side]["hash"]
        if vocab.content_hash() != want:
            raise CheckpointError(f"{path}: {side} hash does not match its tokens")
    model = EditModel(config, src_vocab, tgt_vocab, seed=header.get("seed", 0))

    params = {p.name: p for p in model.parameters()}
    manifest = header["manifest"]
    if [m["name"] for m in manifest] != [p.name for p in model.parameters()]:
        raise CheckpointError(f"{path}: parameter manifest does not match model")
    with open(path, "rb") as fh:
        fh.seek(len(MAGIC))
        (hlen,) = struct.unpack("<Q", fh.read(8))
        fh.seek(len(MAGIC) + 8 + hlen)
        for m in manifest:
            shape = tuple(m["shape"])
            n = int(np.prod(shape)) if shape else 1
            raw = fh.read(4 * n)
            if len(raw) != 4 * n:
                raise CheckpointError(f"{path}: truncated block for {m['name']}")
            arr = np.frombuffer(raw, dtype="<f4").reshape(shape)
            p = params[m["name"]]
            if p.data.shape != shape:
                raise CheckpointError(
                    f"{path}: shape {shape} for {m['name']} does not match "
                    f"model shape {p.data.shape}")
            p.data[...] = arr.astype(p.data.dtype)
            p.grad = None
        trailing = fh.read(1)
        if trailing:
            raise CheckpointError(f"{path}: trailing bytes after last block")
    return model, header.get("extra", {})


def checkpoint_hashes(path: str | Path) -> tuple[str, str]:
    """Source and target vocabulary hashes recorded in a checkpoint."""
    header = read_header(path)
    return header["src_vocab"]["hash"], header["tgt_vocab"]["hash"]
