"""Edit-representation models.

Three variants share one encoder-decoder chassis:

* ``EVE``   - variational: an aligned-edit BiLSTM feeds a diagonal-Gaussian
  posterior over a latent z; the decoder reconstructs the revised sequence
  from z plus an attention view of the original document, and a small MLP
  head predicts the bag of changed tokens from z.
* ``YIN``   - the same edit encoder used deterministically: the BiLSTM output
  itself is the edit vector (no posterior, no sampling, no KL).
* ``GUU``   - bag-of-words sums over inserted vs deleted tokens, projected and
  concatenated; training perturbs this vector with von Mises-Fisher noise on
  the direction and uniform noise on the (truncated) norm.

The heavy lifting happens in batched Tensor methods (suffix ``_batch``);
the single-example methods wrap them for inspection and evaluation and
return plain numpy under ``no_grad``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from . import vmf
from .alignment import AlignedEdit
from .autodiff import Parameter, Tensor
from .corpus import (
    BOS_ID,
    EOS_ID,
    TAG_ID,
    Batch,
    Vocabulary,
    encode_batch,
    stream_rng,
)
from .layers import BiLSTM, Embedding, GeneralAttention, Linear, LSTMCell, LstmState, length_mask

VARIANTS = ("EVE", "YIN", "GUU")

GUU_NORM_CAP = 10.0  # edit vectors live in a ball of this radius


@dataclass
class ModelConfig:
    src_vocab_size: int
    tgt_vocab_size: int
    d_emb: int = 32
    d_h: int = 64
    d_z: int = 16
    word_dropout_rate: float = 0.25
    beam_width: int = 4
    max_decode_len: int = 30
    variant: str = "EVE"
    guu_kappa: float = 30.0
    guu_eps: float = 1.0
    dtype: str = "float32"

    def validate(self) -> None:
        for name in ("src_vocab_size", "tgt_vocab_size", "d_emb", "d_h", "d_z",
                     "beam_width", "max_decode_len"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.word_dropout_rate <= 1.0:
            raise ValueError("word_dropout_rate must be in [0, 1]")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.guu_kappa <= 0:
            raise ValueError("guu_kappa must be positive")
        if not 0.0 < self.guu_eps < GUU_NORM_CAP:
            raise ValueError(f"guu_eps must be in (0, {GUU_NORM_CAP})")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        cfg = cls(**d)
        cfg.validate()
        return cfg


@dataclass
class LatentPosterior:
    """Diagonal Gaussian q(z | edit); log_var arrives pre-clamped."""

    mu: np.ndarray
    log_var: np.ndarray


@dataclass
class EncodedDoc:
    annotations: np.ndarray  # (T, 2*d_h)
    final: np.ndarray        # (2*d_h,)


@dataclass
class GuuEditVector:
    f: np.ndarray
    z: np.ndarray


@dataclass
class BatchedDoc:
    """Internal Tensor view of encoded source documents."""

    annotations: Tensor      # (B, T, 2*d_h)
    final: Tensor            # (B, 2*d_h)
    mask: np.ndarray         # (B, T)


class EditModel:
    """One chassis, three variants; see the module docstring."""

    def __init__(self, config: ModelConfig, src_vocab: Vocabulary,
                 tgt_vocab: Vocabulary, seed: int = 0):
        config.validate()
        if len(src_vocab) != config.src_vocab_size:
            raise ValueError("src vocab size does not match config")
        if len(tgt_vocab) != config.tgt_vocab_size:
            raise ValueError("tgt vocab size does not match config")
        self.config = config
        self.src_vocab = src_vocab
        self.tgt_vocab = tgt_vocab
        self.seed = seed
        self.np_dtype = np.float32 if config.dtype == "float32" else np.float64

        rng = stream_rng(seed, "init")
        c = config
        d_ann = 2 * c.d_h                     # doc annotation width
        self.d_dec = 2 * c.d_h                # decoder hidden width
        self.d_he = c.d_h                     # projected-latent width
        if c.variant == "EVE":
            self.latent_dim = c.d_z
        else:
            self.latent_dim = 2 * c.d_h      # YIN: h_e; GUU: [h+; h-]

        dt = self.np_dtype
        self.emb_src = Embedding("emb.src", c.src_vocab_size, c.d_emb, rng, dt)
        self.emb_tgt = Embedding("emb.tgt", c.tgt_vocab_size, c.d_emb, rng, dt)
        self._encoder_parts: list = [self.emb_src, self.emb_tgt]
        if c.variant in ("EVE", "YIN"):
            self.emb_tag = Embedding("emb.tag", len(TAG_ID), c.d_emb, rng, dt)
            self.enc_edit = BiLSTM("enc.edit", 3 * c.d_emb, c.d_h, rng, dt)
            self._encoder_parts += [self.emb_tag, self.enc_edit]
        else:
            self.emb_bag = Embedding("guu.emb", c.tgt_vocab_size, c.d_emb, rng, dt)
            # pure projections: an identity edit must give exactly f = 0
            self.proj_pos = Linear("guu.proj_pos", c.d_emb, c.d_h, rng, dt, bias=False)
            self.proj_neg = Linear("guu.proj_neg", c.d_emb, c.d_h, rng, dt, bias=False)
            self._encoder_parts += [self.emb_bag, self.proj_pos, self.proj_neg]
        self.enc_doc = BiLSTM("enc.doc", c.d_emb, c.d_h, rng, dt)
        self._encoder_parts.append(self.enc_doc)
        if c.variant == "EVE":
            self.post_mu = Linear("post.mu", 2 * c.d_h, c.d_z, rng, dt)
            self.post_logvar = Linear("post.logvar", 2 * c.d_h, c.d_z, rng, dt)
            self._encoder_parts += [self.post_mu, self.post_logvar]

        self._decoder_parts: list = []
        self.latent_proj = Linear("dec.latent_proj", self.latent_dim, self.d_he, rng, dt)
        self.bridge = Linear("dec.bridge", self.latent_dim + d_ann, 2 * self.d_dec, rng, dt)
        self.attn = GeneralAttention("dec.attn", self.d_dec, d_ann, rng, dt)
        self.dec_lstm = LSTMCell("dec.lstm", c.d_emb + self.d_he + d_ann,
                                 self.d_dec, rng, dt)
        self.out = Linear("dec.out", self.d_dec + d_ann, c.tgt_vocab_size, rng, dt)
        self._decoder_parts += [self.latent_proj, self.bridge, self.attn,
                                self.dec_lstm, self.out]
        self.xdelta_fc1 = Linear("xdelta.fc1", self.latent_dim, self.latent_dim, rng, dt)
        self.xdelta_fc2 = Linear("xdelta.fc2", self.latent_dim, c.tgt_vocab_size, rng, dt)
        self._head_parts = [self.xdelta_fc1, self.xdelta_fc2]

    # -- parameter registry ---------------------------------------------------

    def parameters(self) -> list[Parameter]:
        out: list[Parameter] = []
        for part in self._encoder_parts + self._decoder_parts + self._head_parts:
            out.extend(part.params())
        return out

    def encoder_parameters(self) -> list[Parameter]:
        out: list[Parameter] = []
        for part in self._encoder_parts:
            out.extend(part.params())
        return out

    def decoder_parameters(self) -> list[Parameter]:
        out: list[Parameter] = []
        for part in self._decoder_parts:
            out.extend(part.params())
        return out

    def reset_decoder(self, seed: int | None = None) -> None:
        """Fresh init for the whole generation path (latent projection,
        bridge, attention, decoder LSTM, output layer); encoder-side and
        posterior parameters are untouched."""
        rng = stream_rng(self.seed if seed is None else seed, "reset-decoder")
        c = self.config
        dt = self.np_dtype
        d_ann = 2 * c.d_h
        fresh = [
            Linear("dec.latent_proj", self.latent_dim, self.d_he, rng, dt),
            Linear("dec.bridge", self.latent_dim + d_ann, 2 * self.d_dec, rng, dt),
            GeneralAttention("dec.attn", self.d_dec, d_ann, rng, dt),
            LSTMCell("dec.lstm", c.d_emb + self.d_he + d_ann, self.d_dec, rng, dt),
            Linear("dec.out", self.d_dec + d_ann, c.tgt_vocab_size, rng, dt),
        ]
        for old, new in zip(self._decoder_parts, fresh):
            for p_old, p_new in zip(old.params(), new.params()):
                p_old.data[...] = p_new.data
                p_old.grad = None

    # -- batched forward ------------------------------------------------------

    def encode_edit_batch(self, batch: Batch) -> Tensor:
        """(B, 2*d_h) final state of the aligned-edit BiLSTM."""
        if self.config.variant == "GUU":
            raise ValueError("the bag-of-words variant has no edit BiLSTM")
        if batch.edit_len.min() < 1:
            raise ValueError("cannot encode an empty edit")
        e = ad.concat([
            self.emb_tgt(batch.edit_tgt),
            self.emb_src(batch.edit_src),
            self.emb_tag(batch.edit_tags),
        ], axis=-1)
        _, final = self.enc_edit.encode(e, batch.edit_len)
        return final

    def encode_doc_batch(self, batch: Batch) -> BatchedDoc:
        ann, final = self.enc_doc.encode(self.emb_src(batch.doc), batch.doc_len)
        mask = length_mask(batch.doc_len, batch.doc.shape[1])
        return BatchedDoc(annotations=ann, final=final, mask=mask)

    def posterior_batch(self, h_e: Tensor) -> tuple[Tensor, Tensor]:
        """mu and clamped log-variance, each (B, d_z)."""
        mu = self.post_mu(h_e)
        log_var = ad.clip(self.post_logvar(h_e), -10.0, 10.0)
        return mu, log_var

    @staticmethod
    def reparameterize_batch(mu: Tensor, log_var: Tensor,
                             e: np.ndarray) -> Tensor:
        sigma = ad.exp(ad.scale(log_var, 0.5))
        return ad.add(mu, ad.mul_const(sigma, np.asarray(e, dtype=mu.dtype)))

    def guu_f_batch(self, batch: Batch) -> Tensor:
        """f = [h+; h-]: projected bag sums of added vs removed tokens."""
        dt = self.np_dtype

        def bag_sum(ids: np.ndarray, lengths: np.ndarray) -> Tensor:
            emb = self.emb_bag(ids)                      # (B, K, d_emb)
            m = length_mask(lengths, ids.shape[1]).astype(dt)
            masked = ad.mul_const(emb, m[:, :, None])
            return ad.sum_axis(masked, axis=1)           # (B, d_emb)

        h_pos = self.proj_pos(bag_sum(batch.bag_pos, batch.bag_pos_len))
        h_neg = self.proj_neg(bag_sum(batch.bag_neg, batch.bag_neg_len))
        return ad.concat([h_pos, h_neg], axis=-1)

    def guu_z_batch(self, f: Tensor, rng: np.random.Generator | None = None,
                    deterministic: bool = False) -> Tensor:
        """Sampled (or truncated-MAP) edit vector from f.

        The vMF weight and tangent noise are drawn outside the graph, so the
        only differentiable inputs are the direction f/|f| and the truncated
        norm - the noise distribution itself has no parameter dependence.
        """
        c = self.config
        norms = np.linalg.norm(f.data, axis=-1)
        if np.any(norms < 1e-12):
            raise ValueError("undefined direction: zero edit vector")
        fn = ad.row_norm(f)                               # (B, 1)
        f_dir = ad.div(f, fn)
        trunc = ad.minimum_const(fn, GUU_NORM_CAP - c.guu_eps)
        if deterministic:
            return ad.mul(f_dir, trunc)
        if rng is None:
            raise ValueError("sampling requires an rng")
        B, d = f.data.shape
        w = np.array([[vmf.sample_weight(rng, c.guu_kappa, d)] for _ in range(B)],
                     dtype=f.dtype)
        noise = rng.standard_normal((B, d)).astype(f.dtype)
        proj = ad.sum_axis(ad.mul_const(f_dir, noise), axis=1, keepdims=True)
        tangent = ad.sub(ad.constant(noise), ad.mul(proj, f_dir))
        t_dir = ad.div(tangent, ad.row_norm(tangent, eps=1e-20))
        z_dir = ad.add(ad.mul_const(f_dir, w),
                       ad.mul_const(t_dir, np.sqrt(1.0 - w * w)))
        u = rng.uniform(0.0, 1.0, size=(B, 1)).astype(f.dtype)
        z_norm = ad.add_const(trunc, c.guu_eps * u)
        return ad.mul(z_dir, z_norm)

    def latent_batch(
        self,
        batch: Batch,
        rng: np.random.Generator | None = None,
        deterministic: bool = False,
        e_noise: np.ndarray | None = None,
    ) -> tuple[Tensor, tuple[Tensor, Tensor] | None]:
        """Variant dispatch: returns (z, posterior-or-None).

        EVE samples z = mu + sigma*e (e = 0 when deterministic); YIN returns
        the raw edit encoding; GUU perturbs or truncates the bag vector.
        """
        v = self.config.variant
        if v == "EVE":
            h_e = self.encode_edit_batch(batch)
            mu, log_var = self.posterior_batch(h_e)
            if deterministic:
                return mu, (mu, log_var)
            if e_noise is None:
                if rng is None:
                    raise ValueError("sampling requires an rng")
                e_noise = rng.standard_normal(mu.data.shape)
            return self.reparameterize_batch(mu, log_var, e_noise), (mu, log_var)
        if v == "YIN":
            return self.encode_edit_batch(batch), None
        f = self.guu_f_batch(batch)
        return self.guu_z_batch(f, rng=rng, deterministic=deterministic), None

    def decode_batch(self, doc: BatchedDoc, z: Tensor, dec_in: np.ndarray,
                     dec_len: np.ndarray) -> Tensor:
        """Teacher-forced logits (B, L, |V+|).

        The decoder starts from a bridged view of [z; doc.final]; every step
        consumes the previous gold token's embedding, the projected latent,
        and an attention context queried with the previous decoder state.
        """
        d = self.d_dec
        s = ad.tanh(self.bridge(ad.concat([z, doc.final], axis=-1)))
        state = LstmState(h=ad.slice_cols(s, 0, d), c=ad.slice_cols(s, d, 2 * d))
        h_e = self.latent_proj(z)
        emb_in = self.emb_tgt(dec_in)
        L = dec_in.shape[1]
        mask = length_mask(dec_len, L)
        steps = []
        for t in range(L):
            ctx, _ = self.attn(state.h, doc.annotations, doc.mask)
            x_t = ad.concat([ad.time_slice(emb_in, t), h_e, ctx], axis=-1)
            state = self.dec_lstm.step(x_t, state, mask[:, t])
            steps.append(self.out(ad.concat([state.h, ctx], axis=-1)))
        return ad.stack_time(steps)

    def xdelta_logits_batch(self, z: Tensor) -> Tensor:
        return self.xdelta_fc2(ad.tanh(self.xdelta_fc1(z)))

    # -- single-example API ---------------------------------------------------

    def _one_batch(self, edit: AlignedEdit) -> Batch:
        from .alignment import PHI
        from .corpus import EditExample

        ex = EditExample(tuple(t for t in edit.src_padded if t != PHI),
                         tuple(t for t in edit.tgt_padded if t != PHI),
                         frozenset())
        return encode_batch([ex], self.src_vocab, self.tgt_vocab, edits=[edit])

    def encode_edit(self, edit: AlignedEdit) -> np.ndarray:
        if edit.m == 0:
            raise ValueError("cannot encode an empty edit")
        with ad.no_grad():
            return self.encode_edit_batch(self._one_batch(edit)).data[0].copy()

    def encode_doc(self, src: Sequence[str]) -> EncodedDoc:
        if len(src) == 0:
            raise ValueError("cannot encode an empty document")
        ids = np.array([self.src_vocab.encode(src)], dtype=np.int64)
        with ad.no_grad():
            ann, final = self.enc_doc.encode(
                self.emb_src(ids), np.array([len(src)]))
        return EncodedDoc(annotations=ann.data[0].copy(), final=final.data[0].copy())

    def infer_posterior(self, h_e: np.ndarray) -> LatentPosterior:
        if self.config.variant != "EVE":
            raise ValueError("only the variational variant has a posterior")
        with ad.no_grad():
            mu, log_var = self.posterior_batch(ad.constant(h_e.reshape(1, -1)))
        return LatentPosterior(mu=mu.data[0].copy(), log_var=log_var.data[0].copy())

    @staticmethod
    def reparameterize(p: LatentPosterior, e: np.ndarray) -> np.ndarray:
        return p.mu + np.exp(0.5 * p.log_var) * np.asarray(e)

    def project_latent(self, z: np.ndarray) -> np.ndarray:
        with ad.no_grad():
            return self.latent_proj(ad.constant(z.reshape(1, -1))).data[0].copy()

    def xdelta_logits(self, z: np.ndarray) -> np.ndarray:
        with ad.no_grad():
            return self.xdelta_logits_batch(ad.constant(z.reshape(1, -1))).data[0].copy()

    def encode_map(self, edit: AlignedEdit) -> np.ndarray:
        """The deterministic edit representation used at evaluation time."""
        v = self.config.variant
        if v == "EVE":
            return self.infer_posterior(self.encode_edit(edit)).mu
        if v == "YIN":
            return self.yin_encode(edit)
        with ad.no_grad():
            f = self.guu_f_batch(self._one_batch(edit))
            z = self.guu_z_batch(f, deterministic=True)
        return z.data[0].copy()

    def yin_encode(self, edit: AlignedEdit) -> np.ndarray:
        return self.encode_edit(edit)

    def guu_encode(self, edit: AlignedEdit) -> GuuEditVector:
        with ad.no_grad():
            f = self.guu_f_batch(self._one_batch(edit))
            z = self.guu_z_batch(f, deterministic=True)
        return GuuEditVector(f=f.data[0].copy(), z=z.data[0].copy())

    def guu_sample(self, f: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        with ad.no_grad():
            z = self.guu_z_batch(ad.constant(np.asarray(f).reshape(1, -1)), rng=rng)
        return z.data[0].copy()

    def decode_teacher_forced(self, doc: EncodedDoc, z: np.ndarray,
                              tgt: Sequence[str]) -> np.ndarray:
        """Per-step logits (|tgt|+1, |V+|) for BOS..tgt predicting tgt..EOS."""
        dec_in = np.array([[BOS_ID] + self.tgt_vocab.encode(tgt)], dtype=np.int64)
        bdoc = BatchedDoc(
            annotations=ad.constant(doc.annotations[None, :, :]),
            final=ad.constant(doc.final[None, :]),
            mask=np.ones((1, doc.annotations.shape[0]), dtype=bool))
        with ad.no_grad():
            logits = self.decode_batch(bdoc, ad.constant(z.reshape(1, -1)),
                                       dec_in, np.array([dec_in.shape[1]]))
        return logits.data[0].copy()

    def beam_decode(self, doc: EncodedDoc, z: np.ndarray,
                    beam_width: int | None = None,
                    max_len: int | None = None) -> list[str]:
        """Length-normalized beam search; width 1 degenerates to greedy."""
        c = self.config
        width = c.beam_width if beam_width is None else beam_width
        limit = c.max_decode_len if max_len is None else max_len
        if width < 1:
            raise ValueError("beam_width must be >= 1")

        ann = doc.annotations[None, :, :]
        mask1 = np.ones((1, ann.shape[1]), dtype=bool)
        with ad.no_grad():
            d = self.d_dec
            s = ad.tanh(self.bridge(ad.constant(
                np.concatenate([z.reshape(1, -1), doc.final[None, :]], axis=-1))))
            h0, c0 = s.data[:, :d], s.data[:, d:]
            h_e = self.latent_proj(ad.constant(z.reshape(1, -1))).data

            # live hypotheses: (token ids, sum logprob, h, c)
            live = [([BOS_ID], 0.0, h0[0], c0[0])]
            done: list[tuple[list[int], float]] = []
            for _ in range(limit):
                if not live:
                    break
                k = len(live)
                h = ad.constant(np.stack([hyp[2] for hyp in live]))
                cc = ad.constant(np.stack([hyp[3] for hyp in live]))
                prev = np.array([hyp[0][-1] for hyp in live], dtype=np.int64)
                ann_k = ad.constant(np.repeat(ann, k, axis=0))
                ctx, _ = self.attn(h, ann_k, np.repeat(mask1, k, axis=0))
                emb = self.emb_tgt(prev)
                x_t = ad.concat([emb, ad.constant(np.broadcast_to(
                    h_e, (k, h_e.shape[1])).copy()), ctx], axis=-1)
                state = self.dec_lstm.step(x_t, LstmState(h=h, c=cc))
                logits = self.out(ad.concat([state.h, ctx], axis=-1))
                logp = ad.log_softmax(logits).data

                cands = []
                per_hyp = min(width, logp.shape[1])
                for i, (ids, score, _, _) in enumerate(live):
                    top = np.argpartition(-logp[i], per_hyp - 1)[:per_hyp]
                    for tok in top:
                        cands.append((score + float(logp[i, tok]), i, int(tok)))
                cands.sort(key=lambda t: (-t[0], t[1], t[2]))
                next_live = []
                for score, i, tok in cands[:width]:
                    ids = live[i][0] + [tok]
                    n_gen = len(ids) - 1
                    if tok == EOS_ID:
                        done.append((ids, score / n_gen))
                    else:
                        next_live.append(
                            (ids, score, state.h.data[i].copy(), state.c.data[i].copy()))
                live = next_live[:width]

            if not done:
                done = [(ids, score / max(1, len(ids) - 1))
                        for ids, score, _, _ in live]
            best = max(done, key=lambda t: t[1])[0]
        toks = [t for t in best[1:] if t != EOS_ID]
        return self.tgt_vocab.decode(toks)
