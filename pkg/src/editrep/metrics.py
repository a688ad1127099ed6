"""Intrinsic generation metrics: BLEU-4, source-aware GLEU, token accuracy,
and teacher-forced cross-entropy.

BLEU and GLEU share one pooling engine, so ``gleu(src=ref)`` equals ``bleu``
by construction, not by numerical accident.  Corpus scores pool clipped
n-gram counts over all sentences; sentence-level variants apply add-1
smoothing to the n >= 2 precisions (the corpus level uses none).
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .alignment import align
from .corpus import EditExample, make_batches
from .model import EditModel

TokenSeq = Sequence[str]
MAX_N = 4


def _ngrams(seq: TokenSeq, n: int) -> Counter:
    return Counter(tuple(seq[i:i + n]) for i in range(len(seq) - n + 1))


def _pool_counts(
    srcs: Sequence[TokenSeq] | None,
    hyps: Sequence[TokenSeq],
    refs: Sequence[TokenSeq],
) -> tuple[list[int], list[int], int, int]:
    """Per-n (match - source penalty, total) pooled over the corpus.

    With srcs=None the penalty is zero and the result is plain BLEU pooling.
    The penalty charges every hypothesis n-gram that also appears in the
    source but nowhere in the reference: n-grams the system should have
    edited away.
    """
    matches = [0] * MAX_N
    totals = [0] * MAX_N
    c = r = 0
    for k, (hyp, ref) in enumerate(zip(hyps, refs)):
        c += len(hyp)
        r += len(ref)
        src = None if srcs is None else srcs[k]
        for n in range(1, MAX_N + 1):
            hc = _ngrams(hyp, n)
            rc = _ngrams(ref, n)
            totals[n - 1] += sum(hc.values())
            got = sum(min(cnt, rc[g]) for g, cnt in hc.items())
            if src is not None:
                sc = _ngrams(src, n)
                got -= sum(min(cnt, sc[g]) for g, cnt in hc.items()
                           if rc[g] == 0 and sc[g] > 0)
            matches[n - 1] += got
    return matches, totals, c, r


def _geometric_score(matches: Sequence[int], totals: Sequence[int],
                     c: int, r: int, smooth: bool) -> float:
    if c == 0:
        return 0.0
    logs = []
    for n in range(1, MAX_N + 1):
        m, t = matches[n - 1], totals[n - 1]
        m = max(m, 0)
        if smooth and n >= 2:
            m, t = m + 1, t + 1
        if m == 0 or t == 0:
            return 0.0
        logs.append(math.log(m / t))
    bp = 1.0 if c > r else math.exp(1.0 - r / c)
    return bp * math.exp(sum(logs) / MAX_N)


def _check_parallel(*seqs: Sequence) -> None:
    lens = {len(s) for s in seqs}
    if len(lens) != 1:
        raise ValueError(f"parallel inputs differ in length: {sorted(lens)}")


def bleu4(hyps: Sequence[TokenSeq], refs: Sequence[TokenSeq]) -> float:
    """Corpus BLEU-4: pooled clipped precisions, geometric mean, brevity
    penalty; zero when any pooled precision is zero."""
    _check_parallel(hyps, refs)
    m, t, c, r = _pool_counts(None, hyps, refs)
    return _geometric_score(m, t, c, r, smooth=False)


def gleu(srcs: Sequence[TokenSeq], hyps: Sequence[TokenSeq],
         refs: Sequence[TokenSeq]) -> float:
    """Corpus GLEU: BLEU pooling minus a penalty for hypothesis n-grams kept
    from the source that the reference removed; per-n counts floored at 0."""
    _check_parallel(srcs, hyps, refs)
    m, t, c, r = _pool_counts(srcs, hyps, refs)
    return _geometric_score(m, t, c, r, smooth=False)


def sentence_bleu4(hyp: TokenSeq, ref: TokenSeq) -> float:
    m, t, c, r = _pool_counts(None, [hyp], [ref])
    return _geometric_score(m, t, c, r, smooth=True)


def sentence_gleu(src: TokenSeq, hyp: TokenSeq, ref: TokenSeq) -> float:
    m, t, c, r = _pool_counts([src], [hyp], [ref])
    return _geometric_score(m, t, c, r, smooth=True)


def token_accuracy(hyp: TokenSeq, ref: TokenSeq) -> float:
    """Positional match rate over the longer sequence; two empty sequences
    count as a perfect match."""
    if not hyp and not ref:
        return 1.0
    same = sum(1 for a, b in zip(hyp, ref) if a == b)
    return same / max(len(hyp), len(ref))


def cross_entropy(model: EditModel, examples: Sequence[EditExample],
                  batch_size: int = 64) -> float:
    """Teacher-forced mean NLL in nats per target token (EOS included).

    Fully deterministic: the latent is the posterior mean (or the truncated
    bag vector) and word dropout is off.
    """
    from .training import compute_loss
    if not examples:
        raise ValueError("cannot score an empty corpus")
    batches = make_batches(examples, model.src_vocab, model.tgt_vocab,
                           batch_size, seed=0)
    nats = 0.0
    tokens = 0
    with ad.no_grad():
        for b in batches:
            _, bd = compute_loss(model, b, beta=0.0, lam=0.0,
                                 train_mode=False)
            nats += bd.recon_nll * len(b)
            tokens += int(b.dec_len.sum())
    return nats / tokens


@dataclass
class ScoreReport:
    bleu: float
    gleu: float
    token_accuracy: float
    cross_entropy: float
    bleu_level: str = "corpus"
    n_examples: int = 0
    extras: dict = field(default_factory=dict)

    def validate(self) -> None:
        for name in ("bleu", "gleu", "token_accuracy"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} out of range: {v}")

    def to_dict(self) -> dict:
        return {
            "bleu": self.bleu,
            "gleu": self.gleu,
            "token_accuracy": self.token_accuracy,
            "cross_entropy": self.cross_entropy,
            "bleu_level": self.bleu_level,
            "n_examples": self.n_examples,
            **({"extras": self.extras} if self.extras else {}),
        }


def evaluate_model(model: EditModel, examples: Sequence[EditExample],
                   beam_width: int | None = None,
                   log=None) -> tuple[ScoreReport, list[list[str]]]:
    """Beam-decode every example against its own source document and score
    the outputs; returns the report and the decoded hypotheses."""
    say = log if log is not None else (lambda msg: None)
    hyps: list[list[str]] = []
    for i, ex in enumerate(examples):
        e = align(ex.src, ex.tgt)
        z = model.encode_map(e)
        doc = model.encode_doc(list(ex.src))
        hyps.append(model.beam_decode(doc, z, beam_width=beam_width))
        if (i + 1) % 200 == 0:
            say(f"decoded {i + 1}/{len(examples)}")
    srcs = [list(ex.src) for ex in examples]
    refs = [list(ex.tgt) for ex in examples]
    report = ScoreReport(
        bleu=bleu4(hyps, refs),
        gleu=gleu(srcs, hyps, refs),
        token_accuracy=float(np.mean([token_accuracy(h, r)
                                      for h, r in zip(hyps, refs)])),
        cross_entropy=cross_entropy(model, examples),
        n_examples=len(examples),
    )
    report.validate()
    return report, hyps
