"""Neural building blocks: embeddings, linear maps, LSTM cells, bidirectional
encoding, and general (bilinear) attention.

Everything is batched: sequences are (B, T, ·) arrays right-padded with zeros,
with true lengths carried separately.  Masking is done by gating state updates,
so padded positions never contaminate the states that matter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor


def uniform_init(rng: np.random.Generator, shape: tuple[int, ...],
                 fan_in: int, dtype=np.float32) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


@dataclass
class LstmState:
    h: Tensor
    c: Tensor


class Embedding:
    def __init__(self, name: str, vocab_size: int, dim: int,
                 rng: np.random.Generator, dtype=np.float32):
        self.table = Parameter(f"{name}.table",
                               uniform_init(rng, (vocab_size, dim), dim, dtype))
        self.dim = dim

    def __call__(self, ids: np.ndarray) -> Tensor:
        return ad.embedding_lookup(self.table, ids)

    def params(self) -> list[Parameter]:
        return [self.table]


class Linear:
    def __init__(self, name: str, d_in: int, d_out: int,
                 rng: np.random.Generator, dtype=np.float32, bias: bool = True):
        self.w = Parameter(f"{name}.w", uniform_init(rng, (d_in, d_out), d_in, dtype))
        self.b = Parameter(f"{name}.b", np.zeros(d_out, dtype=dtype)) if bias else None
        self.d_in = d_in
        self.d_out = d_out

    def __call__(self, x: Tensor) -> Tensor:
        if x.data.ndim == 2:
            y = ad.matmul(x, self.w)
            return ad.add(y, self.b) if self.b is not None else y
        lead = x.data.shape[:-1]
        flat = ad.reshape(x, (-1, self.d_in))
        out = ad.matmul(flat, self.w)
        if self.b is not None:
            out = ad.add(out, self.b)
        return ad.reshape(out, lead + (self.d_out,))

    def params(self) -> list[Parameter]:
        return [self.w] if self.b is None else [self.w, self.b]


class LSTMCell:
    """Standard LSTM cell; gate layout [input, forget, candidate, output].

    The forget-gate bias starts at 1.0 so early training does not flush the
    cell state.
    """

    def __init__(self, name: str, d_in: int, d_h: int,
                 rng: np.random.Generator, dtype=np.float32):
        self.wx = Parameter(f"{name}.wx", uniform_init(rng, (d_in, 4 * d_h), d_in, dtype))
        self.wh = Parameter(f"{name}.wh", uniform_init(rng, (d_h, 4 * d_h), d_h, dtype))
        bias = np.zeros(4 * d_h, dtype=dtype)
        bias[d_h:2 * d_h] = 1.0
        self.b = Parameter(f"{name}.b", bias)
        self.d_in = d_in
        self.d_h = d_h

    def zero_state(self, batch: int, dtype=np.float32) -> LstmState:
        z = ad.constant(np.zeros((batch, self.d_h), dtype=dtype))
        return LstmState(h=z, c=ad.constant(np.zeros((batch, self.d_h), dtype=dtype)))

    def step(self, x: Tensor, state: LstmState,
             mask: np.ndarray | None = None) -> LstmState:
        """One update; rows with mask 0 keep their previous state."""
        if x.data.shape[-1] != self.d_in:
            raise ValueError(
                f"expected input dim {self.d_in}, got {x.data.shape[-1]}")
        d = self.d_h
        z = ad.add(ad.add(ad.matmul(x, self.wx), ad.matmul(state.h, self.wh)), self.b)
        i = ad.sigmoid(ad.slice_cols(z, 0, d))
        f = ad.sigmoid(ad.slice_cols(z, d, 2 * d))
        g = ad.tanh(ad.slice_cols(z, 2 * d, 3 * d))
        o = ad.sigmoid(ad.slice_cols(z, 3 * d, 4 * d))
        c = ad.add(ad.mul(f, state.c), ad.mul(i, g))
        h = ad.mul(o, ad.tanh(c))
        if mask is not None:
            m = mask.reshape(-1, 1).astype(x.data.dtype)
            h = ad.add(ad.mul_const(h, m), ad.mul_const(state.h, 1.0 - m))
            c = ad.add(ad.mul_const(c, m), ad.mul_const(state.c, 1.0 - m))
        return LstmState(h=h, c=c)

    def params(self) -> list[Parameter]:
        return [self.wx, self.wh, self.b]


def lstm_step(cell: LSTMCell, state: LstmState, x: Tensor) -> LstmState:
    return cell.step(x, state)


def length_mask(lengths: np.ndarray, max_len: int) -> np.ndarray:
    """(B, T) float mask, 1 at positions < length."""
    return (np.arange(max_len)[None, :] < np.asarray(lengths)[:, None])


class BiLSTM:
    """Two LSTM passes over a padded (B, T, d_in) batch.

    Annotation t is [forward state at t ; backward state at t]; the backward
    pass reads the sequence reversed, so its state at position t has consumed
    tokens t..len-1.  ``final`` pairs the two full-coverage states: the
    forward state after the last real token and the backward state after it
    has read back to position 0.  Each half has seen the whole sequence, and
    the two halves are freshest at opposite ends, so ``final`` carries both
    the beginning and the end of the sequence.
    """

    def __init__(self, name: str, d_in: int, d_h: int,
                 rng: np.random.Generator, dtype=np.float32):
        self.fwd = LSTMCell(f"{name}.fwd", d_in, d_h, rng, dtype)
        self.bwd = LSTMCell(f"{name}.bwd", d_in, d_h, rng, dtype)
        self.d_h = d_h

    def encode(self, emb: Tensor, lengths: np.ndarray) -> tuple[Tensor, Tensor]:
        B, T = emb.data.shape[0], emb.data.shape[1]
        if T == 0:
            raise ValueError("cannot encode an empty sequence")
        lengths = np.asarray(lengths)
        if lengths.min() < 1:
            raise ValueError("cannot encode an empty sequence")
        mask = length_mask(lengths, T)

        state = self.fwd.zero_state(B, emb.data.dtype)
        fwd_states = []
        for t in range(T):
            state = self.fwd.step(ad.time_slice(emb, t), state, mask[:, t])
            fwd_states.append(state.h)

        state = self.bwd.zero_state(B, emb.data.dtype)
        bwd_states = [None] * T
        for t in reversed(range(T)):
            state = self.bwd.step(ad.time_slice(emb, t), state, mask[:, t])
            bwd_states[t] = state.h

        fwd_seq = ad.stack_time(fwd_states)
        annotations = ad.concat([fwd_seq, ad.stack_time(bwd_states)], axis=-1)
        # bwd_states[0] is the backward state after its full pass; padding
        # steps are masked, so it is the full-coverage state for every row.
        final = ad.concat(
            [ad.gather_time(fwd_seq, lengths - 1), bwd_states[0]], axis=-1)
        return annotations, final

    def params(self) -> list[Parameter]:
        return self.fwd.params() + self.bwd.params()


class GeneralAttention:
    """Bilinear scoring: score_t = queryᵀ · W · annotation_t."""

    def __init__(self, name: str, d_query: int, d_ann: int,
                 rng: np.random.Generator, dtype=np.float32):
        self.w = Parameter(f"{name}.w", uniform_init(rng, (d_query, d_ann), d_query, dtype))

    def __call__(self, query: Tensor, annotations: Tensor,
                 mask: np.ndarray | None = None) -> tuple[Tensor, Tensor]:
        """Returns (context (B, d_ann), weights (B, T))."""
        scores = ad.attn_scores(ad.matmul(query, self.w), annotations)
        if mask is not None:
            penalty = (1.0 - mask.astype(scores.data.dtype)) * -1e9
            scores = ad.add_const(scores, penalty)
        weights = ad.softmax(scores, axis=-1)
        context = ad.attn_context(weights, annotations)
        return context, weights

    def params(self) -> list[Parameter]:
        return [self.w]


def attention_general(query: Tensor, annotations: Tensor, w: Parameter,
                      mask: np.ndarray | None = None) -> tuple[Tensor, Tensor]:
    att = GeneralAttention.__new__(GeneralAttention)
    att.w = w
    return att(query, annotations, mask)
