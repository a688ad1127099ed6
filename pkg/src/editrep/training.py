"""Loss assembly, KL annealing, word dropout, and the two-stage training loop.

The variational variant trains in two stages: first with the KL weight held
at zero until the validation loss stops improving, then, after the entire
generation path is re-initialized, with a sigmoid-annealed KL weight.  The
deterministic and bag-of-words variants train in a single stage on
reconstruction (plus the changed-token term when enabled); neither ever
builds a KL node, so their loss graphs contain no parameter-dependent KL.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Adam, Tensor
from .corpus import (
    BOS_ID,
    EOS_ID,
    PAD_ID,
    UNK_ID,
    Batch,
    EditExample,
    make_batches,
    stream_rng,
)
from .model import EditModel
from .checkpoint import load_checkpoint, save_checkpoint


class TrainingDiverged(RuntimeError):
    """Raised when a non-finite loss appears; message names the batch."""


@dataclass
class AnnealSchedule:
    midpoint: float           # x0: step at which the weight crosses 0.5
    steepness: float = 0.0025  # k

    def weight(self, step: int) -> float:
        if step < 0:
            raise ValueError("step must be >= 0")
        return 1.0 / (1.0 + math.exp(-self.steepness * (step - self.midpoint)))


def kl_weight(step: int, schedule: AnnealSchedule) -> float:
    return schedule.weight(step)


def kl_batch(mu: Tensor, log_var: Tensor) -> Tensor:
    """Mean per-example KL(q || N(0, I)) for a diagonal Gaussian batch."""
    inner = ad.sub(ad.add_const(log_var, 1.0),
                   ad.add(ad.mul(mu, mu), ad.exp(log_var)))
    per_example = ad.scale(ad.sum_axis(inner, axis=1), -0.5)
    return ad.mean_all(per_example)


def kl_gaussian(mu: np.ndarray, log_var: np.ndarray) -> float:
    """KL(q || N(0, I)) in nats for a single diagonal-Gaussian posterior."""
    mu = np.asarray(mu, dtype=np.float64).reshape(1, -1)
    log_var = np.asarray(log_var, dtype=np.float64).reshape(1, -1)
    with ad.no_grad():
        return float(kl_batch(ad.constant(mu), ad.constant(log_var)).data)


def xdelta_batch(f_logits: Tensor, ids: np.ndarray, lengths: np.ndarray) -> Tensor:
    """Mean per-example bag NLL: each changed token scored against one
    softmax over the target vocabulary."""
    B, K = ids.shape
    if K == 0 or lengths.max() == 0:
        return ad.constant(np.zeros((), dtype=f_logits.dtype))
    mask = (np.arange(K)[None, :] < lengths[:, None]).astype(f_logits.dtype)
    per_example = None
    for k in range(K):
        slot = ad.mul_const(ad.nll_from_logits(f_logits, ids[:, k]), mask[:, k])
        per_example = slot if per_example is None else ad.add(per_example, slot)
    return ad.mean_all(per_example)


def xdelta_loss(f: np.ndarray, changed_ids: Sequence[int]) -> float:
    """Bag NLL of one logit vector against one list of changed-token ids."""
    f = np.asarray(f, dtype=np.float64).reshape(1, -1)
    ids = np.asarray(list(changed_ids), dtype=np.int64).reshape(1, -1)
    if ids.size == 0:
        return 0.0
    with ad.no_grad():
        return float(xdelta_batch(
            ad.constant(f), ids, np.array([ids.shape[1]])).data)


def word_dropout(ids: np.ndarray, rate: float,
                 rng: np.random.Generator) -> np.ndarray:
    """Replace gold decoder-input tokens by UNK with the given probability.

    BOS, EOS, and padding are never touched.
    """
    if not 0.0 <= rate <= 1.0:
        raise ValueError("rate must be in [0, 1]")
    if rate == 0.0:
        return ids
    eligible = (ids != PAD_ID) & (ids != BOS_ID) & (ids != EOS_ID)
    hit = rng.random(ids.shape) < rate
    out = ids.copy()
    out[eligible & hit] = UNK_ID
    return out


@dataclass
class LossBreakdown:
    recon_nll: float
    kl: float
    xdelta_nll: float
    kl_weight: float
    xdelta_weight: float

    @property
    def total(self) -> float:
        return (self.recon_nll + self.kl_weight * self.kl
                + self.xdelta_weight * self.xdelta_nll)

    def to_dict(self) -> dict:
        return {
            "recon_nll": self.recon_nll,
            "kl": self.kl,
            "xdelta_nll": self.xdelta_nll,
            "kl_weight": self.kl_weight,
            "xdelta_weight": self.xdelta_weight,
            "total": self.total,
        }


@dataclass
class TrainConfig:
    seed: int = 0
    batch_size: int = 64
    lr: float = 1e-3
    grad_clip: float = 5.0
    lambda_xdelta: float = 1.0
    stage_a_max_epochs: int = 30
    stage_b_epochs: int = 10
    patience: int = 3
    anneal_steepness: float = 0.0025
    # ablation switches: two_stage=False skips the KL-free warm start and the
    # reset; anneal=False pins the KL weight at zero for the whole run
    two_stage: bool = True
    anneal: bool = True

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "seed", "batch_size", "lr", "grad_clip", "lambda_xdelta",
            "stage_a_max_epochs", "stage_b_epochs", "patience",
            "anneal_steepness", "two_stage", "anneal")}


@dataclass
class EpochRecord:
    stage: str
    epoch: int
    train: LossBreakdown
    valid: LossBreakdown
    is_best: bool = False

    def to_dict(self) -> dict:
        return {"stage": self.stage, "epoch": self.epoch,
                "train": self.train.to_dict(), "valid": self.valid.to_dict(),
                "is_best": self.is_best}


@dataclass
class TrainReport:
    variant: str
    epochs: list[EpochRecord] = field(default_factory=list)
    best_checkpoint: str | None = None
    best_valid_total: float = float("inf")
    stage_a_epochs: int = 0
    stage_b_epochs: int = 0
    total_steps: int = 0
    wall_seconds: float = 0.0

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "epochs": [e.to_dict() for e in self.epochs],
            "best_checkpoint": self.best_checkpoint,
            "best_valid_total": self.best_valid_total,
            "stage_a_epochs": self.stage_a_epochs,
            "stage_b_epochs": self.stage_b_epochs,
            "total_steps": self.total_steps,
            "wall_seconds": self.wall_seconds,
        }


def compute_loss(
    model: EditModel,
    batch: Batch,
    beta: float,
    lam: float,
    rng: np.random.Generator | None = None,
    train_mode: bool = True,
) -> tuple[Tensor, LossBreakdown]:
    """One forward pass; returns the total-loss node and its parts.

    Training mode samples the latent (one Monte-Carlo draw) and applies word
    dropout; evaluation mode is fully deterministic (posterior mean or
    truncated bag vector, no dropout).
    """
    variational = model.config.variant == "EVE"
    z, post = model.latent_batch(batch, rng=rng, deterministic=not train_mode)
    doc = model.encode_doc_batch(batch)
    dec_in = batch.dec_in
    if train_mode and model.config.word_dropout_rate > 0:
        if rng is None:
            raise ValueError("training mode requires an rng")
        dec_in = word_dropout(dec_in, model.config.word_dropout_rate, rng)
    logits = model.decode_batch(doc, z, dec_in, batch.dec_len)

    B, L, V = logits.data.shape
    nll = ad.nll_from_logits(ad.reshape(logits, (B * L, V)),
                             batch.dec_out.reshape(-1))
    tok_mask = (np.arange(L)[None, :] < batch.dec_len[:, None])
    masked = ad.mul_const(ad.reshape(nll, (B, L)), tok_mask.astype(logits.dtype))
    recon = ad.mean_all(ad.sum_axis(masked, axis=1))

    total = recon
    kl_value = 0.0
    if variational:
        assert post is not None
        kl = kl_batch(post[0], post[1])
        kl_value = float(kl.data)
        if beta != 0.0:
            total = ad.add(total, ad.scale(kl, beta))
    xd_value = 0.0
    if lam != 0.0:
        xd = xdelta_batch(model.xdelta_logits_batch(z),
                          batch.xdelta, batch.xdelta_len)
        xd_value = float(xd.data)
        total = ad.add(total, ad.scale(xd, lam))
    return total, LossBreakdown(
        recon_nll=float(recon.data), kl=kl_value, xdelta_nll=xd_value,
        kl_weight=beta, xdelta_weight=lam)


def evaluate_loss(model: EditModel, batches: Sequence[Batch], beta: float,
                  lam: float) -> LossBreakdown:
    """Deterministic mean breakdown over batches, weighted by batch size."""
    parts = np.zeros(3)
    n = 0
    with ad.no_grad():
        for b in batches:
            _, bd = compute_loss(model, b, beta, lam, train_mode=False)
            parts += len(b) * np.array([bd.recon_nll, bd.kl, bd.xdelta_nll])
            n += len(b)
    parts /= max(n, 1)
    return LossBreakdown(recon_nll=float(parts[0]), kl=float(parts[1]),
                         xdelta_nll=float(parts[2]), kl_weight=beta,
                         xdelta_weight=lam)


def _mean_breakdown(records: list[LossBreakdown]) -> LossBreakdown:
    return LossBreakdown(
        recon_nll=float(np.mean([r.recon_nll for r in records])),
        kl=float(np.mean([r.kl for r in records])),
        xdelta_nll=float(np.mean([r.xdelta_nll for r in records])),
        kl_weight=float(np.mean([r.kl_weight for r in records])),
        xdelta_weight=records[-1].xdelta_weight,
    )


def _snapshot(model: EditModel) -> dict[str, np.ndarray]:
    return {p.name: p.data.copy() for p in model.parameters()}


def _restore(model: EditModel, snap: dict[str, np.ndarray]) -> None:
    for p in model.parameters():
        p.data[...] = snap[p.name]
        p.grad = None


def _rng_state(rng: np.random.Generator) -> dict:
    return rng.bit_generator.state


def _set_rng_state(rng: np.random.Generator, state: dict) -> None:
    rng.bit_generator.state = state


def train(
    model: EditModel,
    train_examples: Sequence[EditExample],
    valid_examples: Sequence[EditExample],
    config: TrainConfig,
    out_dir: str | Path | None = None,
    resume: bool = False,
    log=None,
) -> TrainReport:
    """Run the full training schedule and leave the model in its best state.

    For the variational variant: stage A (KL weight fixed at zero) with early
    stopping, then a full reset of the generation path, then stage B with the
    sigmoid anneal; the best stage-B model is selected by valid
    recon + kl + lambda*xdelta (unannealed weights, so epochs are comparable).
    Deterministic variants run stage B alone with early stopping and no KL.

    With an out_dir the loop writes ``last.ckpt`` (with optimizer and RNG
    state alongside) after every epoch; ``resume=True`` picks up from it and
    continues bit-identically to an uninterrupted run.

    Raises TrainingDiverged when any batch produces a non-finite loss.
    """
    t0 = time.time()
    say = log if log is not None else (lambda msg: None)
    variational = model.config.variant == "EVE"
    warm_start = variational and config.two_stage
    annealed = variational and config.anneal
    lam = config.lambda_xdelta
    rng = stream_rng(config.seed, "train-noise")
    order_rng = stream_rng(config.seed, "epoch-order")

    batches = make_batches(train_examples, model.src_vocab, model.tgt_vocab,
                           config.batch_size, seed=config.seed)
    valid_batches = make_batches(valid_examples, model.src_vocab,
                                 model.tgt_vocab, config.batch_size,
                                 bucket_by_length=True, seed=config.seed)
    opt = Adam(model.parameters(), lr=config.lr, clip_norm=config.grad_clip)
    report = TrainReport(variant=model.config.variant)

    # mutable loop position; everything needed to continue after a kill
    state = {
        "stage": "A" if warm_start else "B",
        "epoch": 0,
        "step": 0,
        "b_start": 0,
        "best": float("inf"),
        "bad": 0,
        "has_best": False,
    }

    last_path = None if out_dir is None else Path(out_dir) / "last.ckpt"
    best_path = None if out_dir is None else Path(out_dir) / "best.ckpt"
    if resume:
        if last_path is None or not last_path.exists():
            raise FileNotFoundError("resume requested but no last checkpoint")
        prev, extra = load_checkpoint(last_path)
        for p, q in zip(model.parameters(), prev.parameters()):
            p.data[...] = q.data
            p.grad = None
        state = extra["train_state"]
        _set_rng_state(rng, json.loads(extra["rng_state"]))
        _set_rng_state(order_rng, json.loads(extra["order_state"]))
        side = np.load(Path(out_dir) / "last.opt.npz")
        opt.load_state_arrays({k: side[k] for k in side.files})
        for rec in extra["epochs"]:
            report.epochs.append(EpochRecord(
                rec["stage"], rec["epoch"],
                LossBreakdown(**{k: v for k, v in rec["train"].items()
                                 if k != "total"}),
                LossBreakdown(**{k: v for k, v in rec["valid"].items()
                                 if k != "total"}),
                rec["is_best"]))
        report.stage_a_epochs = sum(1 for r in report.epochs if r.stage == "A")
        report.stage_b_epochs = sum(1 for r in report.epochs if r.stage == "B")
        say(f"resumed at stage {state['stage']} epoch {state['epoch']}")

    best_snap = None   # in-memory fallback when out_dir is None

    def run_epoch(stage: str, epoch: int, beta_of_step) -> LossBreakdown:
        order = order_rng.permutation(len(batches))
        seen: list[LossBreakdown] = []
        for j, bi in enumerate(order):
            beta = beta_of_step(state["step"])
            try:
                total, bd = compute_loss(model, batches[bi], beta, lam,
                                         rng=rng, train_mode=True)
                opt.zero_grad()
                total.backward()
            except FloatingPointError as err:
                raise TrainingDiverged(
                    f"non-finite loss in stage {stage} epoch {epoch} "
                    f"batch {j} (corpus batch {bi}): {err}") from err
            opt.step()
            state["step"] += 1
            seen.append(bd)
        return _mean_breakdown(seen)

    def save_progress() -> None:
        if out_dir is None:
            return
        extra = {
            "train_state": state,
            "rng_state": json.dumps(_rng_state(rng)),
            "order_state": json.dumps(_rng_state(order_rng)),
            "epochs": [e.to_dict() for e in report.epochs],
        }
        save_checkpoint(last_path, model, extra=extra)
        np.savez(Path(out_dir) / "last.opt.npz", **opt.state_arrays())

    def save_best() -> None:
        nonlocal best_snap
        if out_dir is None:
            best_snap = _snapshot(model)
        else:
            save_checkpoint(best_path, model, extra={"selected": "best-valid"})

    # -- stage A: zero KL weight, early stopping ------------------------------
    if warm_start and state["stage"] == "A":
        for epoch in range(state["epoch"], config.stage_a_max_epochs):
            tr = run_epoch("A", epoch, lambda s: 0.0)
            va = evaluate_loss(model, valid_batches, 0.0, lam)
            improved = va.total < state["best"] - 1e-6
            if improved:
                state["best"] = va.total
                state["bad"] = 0
            else:
                state["bad"] += 1
            report.epochs.append(EpochRecord("A", epoch, tr, va, improved))
            report.stage_a_epochs = epoch + 1
            say(f"stage A epoch {epoch}: train {tr.total:.4f} "
                f"valid {va.total:.4f}{' *' if improved else ''}")
            stop = state["bad"] >= config.patience
            state["epoch"] = epoch + 1
            save_progress()
            if stop:
                break
        model.reset_decoder(config.seed)
        opt = Adam(model.parameters(), lr=config.lr, clip_norm=config.grad_clip)
        state.update(stage="B", epoch=0, b_start=state["step"],
                     best=float("inf"), bad=0)
        save_progress()
        say("generation path reset; starting stage B")

    # -- stage B: full objective ----------------------------------------------
    planned = len(batches) * config.stage_b_epochs
    schedule = AnnealSchedule(midpoint=planned / 2.0,
                              steepness=config.anneal_steepness)
    b_start = state["b_start"]
    for epoch in range(state["epoch"], config.stage_b_epochs):
        if annealed:
            beta_fn = lambda s: schedule.weight(s - b_start)
        else:
            beta_fn = lambda s: 0.0
        tr = run_epoch("B", epoch, beta_fn)
        # selection at unannealed weights so epochs are comparable
        sel_beta = 1.0 if annealed else 0.0
        va = evaluate_loss(model, valid_batches, sel_beta, lam)
        improved = va.total < state["best"] - 1e-6
        if improved:
            state["best"] = va.total
            state["bad"] = 0
            state["has_best"] = True
            save_best()
        else:
            state["bad"] += 1
        report.epochs.append(EpochRecord("B", epoch, tr, va, improved))
        report.stage_b_epochs = epoch + 1
        say(f"stage B epoch {epoch}: train {tr.total:.4f} "
            f"valid {va.total:.4f}{' *' if improved else ''}")
        state["epoch"] = epoch + 1
        save_progress()
        # a fixed-length anneal must run to completion; plain objectives stop
        if not annealed and state["bad"] >= config.patience:
            break

    if state["has_best"]:
        if out_dir is None:
            _restore(model, best_snap)
        else:
            best_model, _ = load_checkpoint(best_path)
            for p, q in zip(model.parameters(), best_model.parameters()):
                p.data[...] = q.data
                p.grad = None
    report.best_valid_total = state["best"]
    report.total_steps = state["step"]
    report.best_checkpoint = (str(best_path)
                              if best_path is not None and state["has_best"]
                              else None)
    report.wall_seconds = time.time() - t0
    if out_dir is not None:
        with open(Path(out_dir) / "train_report.json", "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
    return report
