"""Corpus ingestion, vocabularies, synthetic data, splits and batches.

The on-disk corpus format is JSON Lines: one object per line with
pre-tokenized ``"src"`` and ``"tgt"`` token arrays and an optional
``"labels"`` array of strings.  A small rule-based generator produces
labeled synthetic corpora in the same format, so everything downstream is
format-agnostic.
"""

from __future__ import annotations

import hashlib
import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .alignment import PHI, AlignedEdit, EditTag, align

PAD, UNK, BOS, EOS = "<pad>", "<unk>", "<s>", "</s>"
RESERVED = (PAD, UNK, BOS, EOS, PHI)
PAD_ID, UNK_ID, BOS_ID, EOS_ID, PHI_ID = range(5)

DEFAULT_MIN_LEN = 1
DEFAULT_MAX_LEN = 60


def stream_rng(seed: int, name: str) -> np.random.Generator:
    """Named RNG sub-stream derived from one master seed.

    Every consumer of randomness pulls its own stream by name so that, e.g.,
    word dropout draws never perturb initialization draws.
    """
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    key = int.from_bytes(digest[:8], "little")
    return np.random.default_rng(np.random.SeedSequence([seed, key]))


@dataclass(frozen=True)
class EditExample:
    """One (original, revised) token pair plus optional label strings."""

    src: tuple[str, ...]
    tgt: tuple[str, ...]
    labels: frozenset[str] = frozenset()

    def to_json(self) -> str:
        obj = {"src": list(self.src), "tgt": list(self.tgt)}
        if self.labels:
            obj["labels"] = sorted(self.labels)
        return json.dumps(obj, ensure_ascii=False)


def load_jsonl(
    path: str | Path,
    min_len: int = DEFAULT_MIN_LEN,
    max_len: int = DEFAULT_MAX_LEN,
) -> list[EditExample]:
    """Load a JSONL corpus, dropping no-edit pairs and out-of-range lengths.

    Raises ValueError with the offending line number on malformed JSON, a
    missing required field, or a reserved token in the input.
    """
    out: list[EditExample] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}: malformed JSON on line {lineno}: {exc}") from exc
            for fname in ("src", "tgt"):
                if fname not in obj:
                    raise ValueError(f"{path}: line {lineno} missing required field {fname!r}")
            src = tuple(str(t) for t in obj["src"])
            tgt = tuple(str(t) for t in obj["tgt"])
            if PHI in src or PHI in tgt:
                raise ValueError(
                    f"{path}: line {lineno} contains the reserved pad token {PHI!r}"
                )
            if src == tgt:
                continue
            if not (min_len <= len(src) <= max_len and min_len <= len(tgt) <= max_len):
                continue
            labels = frozenset(str(x) for x in obj.get("labels", []))
            out.append(EditExample(src, tgt, labels))
    return out


def save_jsonl(path: str | Path, examples: Iterable[EditExample]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(ex.to_json())
            fh.write("\n")


class Vocabulary:
    """Deterministic token <-> id bijection with five reserved ids.

    Ids 0..4 are PAD, UNK, BOS, EOS and the pad-gap token; corpus tokens
    follow, sorted by descending frequency then ascending lexicographic
    order so two builds over the same corpus agree exactly.
    """

    def __init__(self, tokens: Sequence[str]):
        self._itos = list(RESERVED) + [t for t in tokens if t not in RESERVED]
        self._stoi = {t: i for i, t in enumerate(self._itos)}
        if len(self._stoi) != len(self._itos):
            raise ValueError("duplicate tokens in vocabulary")

    def __len__(self) -> int:
        return len(self._itos)

    def __contains__(self, token: str) -> bool:
        return token in self._stoi

    def id(self, token: str) -> int:
        return self._stoi.get(token, UNK_ID)

    def token(self, idx: int) -> str:
        return self._itos[idx]

    def encode(self, tokens: Iterable[str]) -> list[int]:
        stoi = self._stoi
        return [stoi.get(t, UNK_ID) for t in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self._itos[i] for i in ids]

    @property
    def tokens(self) -> list[str]:
        return list(self._itos)

    def content_hash(self) -> str:
        payload = json.dumps(self._itos, ensure_ascii=False).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()


def build_vocab(
    examples: Sequence[EditExample], side: str, min_freq: int = 1
) -> Vocabulary:
    """Frequency-sorted vocabulary over one side of the corpus."""
    if not examples:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    if side not in ("source", "target"):
        raise ValueError(f"side must be 'source' or 'target', got {side!r}")
    counts: Counter[str] = Counter()
    for ex in examples:
        counts.update(ex.src if side == "source" else ex.tgt)
    kept = [t for t, c in counts.items() if c >= min_freq]
    kept.sort(key=lambda t: (-counts[t], t))
    return Vocabulary(kept)


TAG_VOCAB = [PAD, EditTag.EQUAL.value, EditTag.INSERT.value,
             EditTag.DELETE.value, EditTag.REPLACE.value]
TAG_ID = {t: i for i, t in enumerate(TAG_VOCAB)}


# ---------------------------------------------------------------------------
# Synthetic labeled edits
# ---------------------------------------------------------------------------

# 200 lowercase word types, 20 capitalized, three punctuation marks, and a
# fixed 30-pair synonym dictionary: small enough to train on a desk CPU in
# minutes, rich enough that the rule classes are non-trivially separable.

_BASE_WORDS = [
    "able", "acid", "angle", "army", "attack", "base", "bird", "blade", "blood",
    "board", "brass", "bread", "bridge", "brush", "burst", "butter", "camera",
    "canvas", "card", "cart", "cause", "chalk", "cheese", "chest", "chief",
    "circle", "clock", "cloud", "coast", "collar", "colony", "comet", "copper",
    "cord", "cotton", "cougar", "course", "crane", "credit", "crime", "crowd",
    "crown", "curve", "danger", "debt", "degree", "desert", "design", "desire",
    "detail", "device", "digit", "dinner", "doubt", "drain", "drawer", "dress",
    "driver", "duster", "eagle", "earth", "effect", "engine", "estate", "event",
    "expert", "fabric", "factor", "fang", "fiber", "field", "finger", "flame",
    "fleet", "flour", "forest", "fork", "fortune", "frame", "fruit", "gallon",
    "garden", "ghost", "giant", "glass", "glove", "grain", "grape", "guide",
    "habit", "hammer", "harbor", "heart", "hedge", "hill", "honey", "hook",
    "horn", "hour", "humor", "india", "insect", "iron", "island", "ivory",
    "jelly", "jewel", "judge", "juice", "kettle", "knee", "ladder", "lake",
    "lamp", "layer", "lease", "lemon", "level", "lever", "linen", "lion",
    "liquid", "locker", "lodge", "lumber", "magnet", "manner", "maple", "marble",
    "margin", "market", "mason", "matter", "meadow", "metal", "meter", "middle",
    "mile", "mirror", "monkey", "motion", "mouth", "muscle", "needle", "nerve",
    "noise", "north", "number", "ocean", "office", "orange", "organ", "oven",
    "oxygen", "palace", "paper", "pardon", "pencil", "pigeon", "pillow", "plane",
    "plate", "pocket", "poison", "porter", "powder", "prison", "pupil", "quartz",
    "rabbit", "radio", "rail", "raven", "reason", "ribbon", "river", "rocket",
    "roof", "rubber", "saddle", "salmon", "sample", "school", "screen", "seat",
    "shadow", "sheep", "shelf", "signal", "silver", "sister", "sleeve", "smoke",
    "spade", "sponge", "spring", "square", "stable", "steam", "stone",
]
assert len(_BASE_WORDS) == 200

_CAP_WORDS = [
    "Anna", "Berlin", "Carlos", "Denmark", "Egypt", "Fiona", "Geneva", "Hans",
    "Iris", "Jacob", "Kyoto", "Lima", "Milan", "Nadia", "Oslo", "Paris",
    "Quentin", "Rome", "Sofia", "Tokyo",
]
assert len(_CAP_WORDS) == 20

_PUNCT = [".", ",", "!"]

SYNONYMS = {
    "able": "fit", "angle": "corner", "army": "force", "attack": "strike",
    "base": "root", "bird": "fowl", "blade": "edge", "blood": "gore",
    "board": "plank", "bread": "loaf", "bridge": "span", "cause": "reason",
    "chief": "leader", "circle": "ring", "cloud": "mist", "coast": "shore",
    "crowd": "mob", "crown": "tiara", "danger": "peril", "desire": "wish",
    "doubt": "qualm", "earth": "soil", "effect": "result", "event": "episode",
    "expert": "master", "field": "plot", "flame": "blaze", "forest": "wood",
    "fortune": "luck", "fruit": "crop",
}
assert len(SYNONYMS) == 30

RULE_CLASSES = ("LOWERCASE_FIRST", "DROP_TOKEN", "DUP_TOKEN", "SWAP_PUNCT", "SYNONYM")


def _random_sentence(
    rng: np.random.Generator, needs: str | None, base_vocab_size: int
) -> list[str]:
    """Sentence of 5..20 tokens; shape depends on which rule must apply."""
    pool = _BASE_WORDS[:base_vocab_size]
    body_len = int(rng.integers(3, 19))  # +capitalized head and terminal punct
    words = [pool[i] for i in rng.integers(0, len(pool), body_len)]
    if needs == "SYNONYM":
        # guarantee at least one token with a dictionary entry
        keys = sorted(SYNONYMS)
        pos = int(rng.integers(0, body_len))
        words[pos] = keys[int(rng.integers(0, len(keys)))]
    head = _CAP_WORDS[int(rng.integers(0, len(_CAP_WORDS)))]
    if needs == "SWAP_PUNCT":
        terminal = "." if rng.random() < 0.5 else "!"
    else:
        terminal = _PUNCT[int(rng.integers(0, len(_PUNCT)))]
    return [head] + words + [terminal]


def _apply_rule(rule: str, src: list[str], rng: np.random.Generator) -> list[str]:
    tgt = list(src)
    if rule == "LOWERCASE_FIRST":
        tgt[0] = tgt[0].lower()
    elif rule == "DROP_TOKEN":
        # interior tokens only, so the result can never equal another class
        pos = int(rng.integers(1, len(tgt) - 1))
        del tgt[pos]
    elif rule == "DUP_TOKEN":
        pos = int(rng.integers(1, len(tgt) - 1))
        tgt.insert(pos + 1, tgt[pos])
    elif rule == "SWAP_PUNCT":
        tgt[-1] = "!" if tgt[-1] == "." else "."
    elif rule == "SYNONYM":
        candidates = [i for i, t in enumerate(tgt) if t in SYNONYMS]
        pos = candidates[int(rng.integers(0, len(candidates)))]
        tgt[pos] = SYNONYMS[tgt[pos]]
    else:
        raise ValueError(f"unknown rule class {rule!r}")
    return tgt


def gen_synthetic(
    n: int,
    classes: Sequence[str] = RULE_CLASSES,
    seed: int = 0,
    base_vocab_size: int = 200,
) -> list[EditExample]:
    """Generate ``n`` labeled single-rule edits, deterministically per seed."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not (1 <= base_vocab_size <= len(_BASE_WORDS)):
        raise ValueError("base_vocab_size must be in [1, 200]")
    classes = tuple(classes)
    if not classes:
        raise ValueError("empty class set")
    unknown = set(classes) - set(RULE_CLASSES)
    if unknown:
        raise ValueError(f"unknown rule classes: {sorted(unknown)}")
    rng = stream_rng(seed, "synthetic-data")
    out: list[EditExample] = []
    for _ in range(n):
        rule = classes[int(rng.integers(0, len(classes)))]
        needs = rule if rule in ("SYNONYM", "SWAP_PUNCT") else None
        src = _random_sentence(rng, needs, base_vocab_size)
        tgt = _apply_rule(rule, src, rng)
        out.append(EditExample(tuple(src), tuple(tgt), frozenset({rule})))
    return out


def split(
    examples: Sequence[EditExample],
    ratios: tuple[float, float, float],
    seed: int,
) -> tuple[list[EditExample], list[EditExample], list[EditExample]]:
    """Deterministic shuffled partition into train/valid/test."""
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise ValueError("ratios must be three positive numbers")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError("ratios must sum to 1")
    rng = stream_rng(seed, "split")
    order = rng.permutation(len(examples))
    n = len(examples)
    n_train = int(round(ratios[0] * n))
    n_valid = int(round(ratios[1] * n))
    n_train = min(n_train, n)
    n_valid = min(n_valid, n - n_train)
    shuffled = [examples[i] for i in order]
    return (
        shuffled[:n_train],
        shuffled[n_train:n_train + n_valid],
        shuffled[n_train + n_valid:],
    )


# ---------------------------------------------------------------------------
# Batching
# ---------------------------------------------------------------------------

@dataclass
class Batch:
    """Rectangular id arrays for one minibatch, plus the raw examples.

    Edit-side arrays are padded to the batch's max aligned length, decoder
    arrays to the max target length plus one for BOS/EOS.  ``*_len`` vectors
    carry the true pre-padding lengths.
    """

    examples: list[EditExample]
    edits: list[AlignedEdit]
    edit_src: np.ndarray    # (B, M*) ids in the source vocabulary
    edit_tgt: np.ndarray    # (B, M*) ids in the target vocabulary
    edit_tags: np.ndarray   # (B, M*) tag ids
    edit_len: np.ndarray    # (B,)
    doc: np.ndarray         # (B, T*) source-document ids
    doc_len: np.ndarray     # (B,)
    dec_in: np.ndarray      # (B, L*) BOS + target ids
    dec_out: np.ndarray     # (B, L*) target ids + EOS
    dec_len: np.ndarray     # (B,) number of prediction positions
    xdelta: np.ndarray      # (B, K*) changed-token ids in the target vocabulary
    xdelta_len: np.ndarray  # (B,)
    # bag-of-words views of the edit for the Guu-style encoder: target-side
    # inserted/replacement tokens vs source-side deleted/replaced tokens,
    # both mapped into the target vocabulary (UNK when absent)
    bag_pos: np.ndarray     # (B, Kp*)
    bag_pos_len: np.ndarray
    bag_neg: np.ndarray     # (B, Kn*)
    bag_neg_len: np.ndarray

    def __len__(self) -> int:
        return len(self.examples)


def _pad_rows(rows: list[list[int]], fill: int = PAD_ID) -> np.ndarray:
    width = max(len(r) for r in rows)
    arr = np.full((len(rows), max(width, 1)), fill, dtype=np.int64)
    for i, r in enumerate(rows):
        arr[i, : len(r)] = r
    return arr


def encode_batch(
    examples: Sequence[EditExample],
    src_vocab: Vocabulary,
    tgt_vocab: Vocabulary,
    edits: Sequence[AlignedEdit] | None = None,
) -> Batch:
    """Align and encode a group of examples into one rectangular Batch.

    Pass ``edits`` to reuse alignments computed elsewhere; they must match
    the examples pairwise.
    """
    from .alignment import changed_tokens  # local import avoids cycle at init

    def bags(e: AlignedEdit) -> tuple[list[str], list[str]]:
        pos = [t for t, tag in zip(e.tgt_padded, e.tags)
               if tag in (EditTag.INSERT, EditTag.REPLACE)]
        neg = [s for s, tag in zip(e.src_padded, e.tags)
               if tag in (EditTag.DELETE, EditTag.REPLACE)]
        return pos, neg

    if edits is None:
        edits = [align(ex.src, ex.tgt) for ex in examples]
    else:
        edits = list(edits)
        if len(edits) != len(examples):
            raise ValueError("edits and examples must pair up")
    bag_pairs = [bags(e) for e in edits]
    edit_src = [src_vocab.encode(e.src_padded) for e in edits]
    edit_tgt = [tgt_vocab.encode(e.tgt_padded) for e in edits]
    edit_tags = [[TAG_ID[t.value] for t in e.tags] for e in edits]
    docs = [src_vocab.encode(ex.src) for ex in examples]
    dec_in = [[BOS_ID] + tgt_vocab.encode(ex.tgt) for ex in examples]
    dec_out = [tgt_vocab.encode(ex.tgt) + [EOS_ID] for ex in examples]
    xdelta = [tgt_vocab.encode(changed_tokens(e)) for e in edits]
    return Batch(
        examples=list(examples),
        edits=edits,
        edit_src=_pad_rows(edit_src),
        edit_tgt=_pad_rows(edit_tgt),
        edit_tags=_pad_rows(edit_tags, fill=TAG_ID[PAD]),
        edit_len=np.array([e.m for e in edits], dtype=np.int64),
        doc=_pad_rows(docs),
        doc_len=np.array([len(d) for d in docs], dtype=np.int64),
        dec_in=_pad_rows(dec_in),
        dec_out=_pad_rows(dec_out),
        dec_len=np.array([len(r) for r in dec_out], dtype=np.int64),
        xdelta=_pad_rows(xdelta),
        xdelta_len=np.array([len(r) for r in xdelta], dtype=np.int64),
        bag_pos=_pad_rows([tgt_vocab.encode(p) for p, _ in bag_pairs]),
        bag_pos_len=np.array([len(p) for p, _ in bag_pairs], dtype=np.int64),
        bag_neg=_pad_rows([tgt_vocab.encode(n) for _, n in bag_pairs]),
        bag_neg_len=np.array([len(n) for _, n in bag_pairs], dtype=np.int64),
    )


def make_batches(
    examples: Sequence[EditExample],
    src_vocab: Vocabulary,
    tgt_vocab: Vocabulary,
    batch_size: int,
    bucket_by_length: bool = True,
    seed: int = 0,
) -> list[Batch]:
    """Chunk the corpus into batches; every example lands in exactly one.

    With bucketing, examples are sorted by aligned length before chunking
    (ties broken by corpus position) and the chunk order is then shuffled,
    which keeps padding waste low without fixing the batch order.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    idx = list(range(len(examples)))
    if bucket_by_length:
        lengths = [align(ex.src, ex.tgt).m for ex in examples]
        idx.sort(key=lambda i: (lengths[i], i))
    chunks = [idx[i:i + batch_size] for i in range(0, len(idx), batch_size)]
    if bucket_by_length and len(chunks) > 1:
        rng = stream_rng(seed, "batch-order")
        chunks = [chunks[i] for i in rng.permutation(len(chunks))]
    return [
        encode_batch([examples[i] for i in chunk], src_vocab, tgt_vocab)
        for chunk in chunks
    ]
