"""Probing frozen edit representations with small feed-forward classifiers.

A probe of depth D stacks D hidden ReLU layers of fixed width on top of the
(frozen) representation matrix and reads out either a softmax over classes
or one sigmoid per label.  Depth 0 is a bare affine layer.  The depth sweep
trains one probe per depth and plots the resulting accuracy curve.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .alignment import align
from .autodiff import Adam, Parameter, Tensor
from .corpus import EditExample, stream_rng
from .layers import Linear
from .model import EditModel

MODES = ("multiclass", "multilabel")
REPS_MAGIC = b"EVEREPS1"


def extract_representations(model: EditModel,
                            examples: Sequence[EditExample]) -> np.ndarray:
    """One deterministic row per example: the variant's evaluation-time edit
    vector (posterior mean, raw encoding, or truncated bag vector)."""
    rows = [model.encode_map(align(ex.src, ex.tgt)) for ex in examples]
    return np.stack(rows).astype(np.float32) if rows else \
        np.zeros((0, model.latent_dim), dtype=np.float32)


def save_representations(path: str | Path, reps: np.ndarray,
                         checkpoint_hash: str = "") -> None:
    """Interchange format: magic, JSON header, then float32 LE rows."""
    reps = np.asarray(reps)
    if reps.ndim != 2:
        raise ValueError("representations must be a 2-D matrix")
    header = json.dumps({"n": int(reps.shape[0]), "d": int(reps.shape[1]),
                         "checkpoint_hash": checkpoint_hash}).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(REPS_MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        fh.write(np.ascontiguousarray(reps, dtype="<f4").tobytes())


def load_representations(path: str | Path) -> tuple[np.ndarray, dict]:
    with open(path, "rb") as fh:
        if fh.read(len(REPS_MAGIC)) != REPS_MAGIC:
            raise ValueError(f"{path}: not a representation file")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        n, d = header["n"], header["d"]
        raw = fh.read(4 * n * d)
        if len(raw) != 4 * n * d:
            raise ValueError(f"{path}: truncated row data")
    return np.frombuffer(raw, dtype="<f4").reshape(n, d).copy(), header


@dataclass
class ProbeConfig:
    depth: int = 0
    width: int = 128
    mode: str = "multiclass"
    epochs: int = 50
    lr: float = 1e-3
    seed: int = 0
    patience: int = 5
    batch_size: int = 128

    def validate(self) -> None:
        if self.depth < 0:
            raise ValueError("depth must be >= 0")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        for name in ("width", "epochs", "batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "depth", "width", "mode", "epochs", "lr", "seed", "patience",
            "batch_size")}


@dataclass
class ProbeSplit:
    """A representation matrix and its labels (strings, or sets of strings
    for the multilabel mode)."""
    x: np.ndarray
    y: list

    def __post_init__(self):
        if len(self.x) != len(self.y):
            raise ValueError("representations and labels differ in length")


@dataclass
class ProbeReport:
    mode: str
    depth: int
    label_set: list[str]
    accuracy: dict[str, float]
    provenance: str = ""
    curve: list[dict] = field(default_factory=list)
    per_label_f1: dict[str, float] = field(default_factory=dict)
    epochs_run: int = 0

    def to_dict(self) -> dict:
        out = {
            "mode": self.mode,
            "depth": self.depth,
            "label_set": self.label_set,
            "accuracy": self.accuracy,
            "provenance": self.provenance,
            "epochs_run": self.epochs_run,
        }
        if self.curve:
            out["curve"] = self.curve
        if self.per_label_f1:
            out["per_label_f1"] = self.per_label_f1
        return out


class _Mlp:
    def __init__(self, d_in: int, width: int, depth: int, n_out: int,
                 rng: np.random.Generator):
        self.layers: list[Linear] = []
        prev = d_in
        for i in range(depth):
            self.layers.append(Linear(f"probe.h{i}", prev, width, rng))
            prev = width
        self.layers.append(Linear("probe.out", prev, n_out, rng))

    def __call__(self, x: Tensor) -> Tensor:
        h = x
        for layer in self.layers[:-1]:
            h = ad.relu(layer(h))
        return self.layers[-1](h)

    def params(self) -> list[Parameter]:
        return [p for layer in self.layers for p in layer.params()]


def _label_universe(mode: str, ys: Sequence) -> list[str]:
    if mode == "multiclass":
        found = sorted({str(y) for y in ys})
    else:
        found = sorted({str(l) for y in ys for l in y})
    if len(found) < 2:
        raise ValueError("labels must cover at least 2 classes")
    return found


def _targets(mode: str, ys: Sequence, label_set: list[str]) -> np.ndarray:
    index = {l: i for i, l in enumerate(label_set)}
    if mode == "multiclass":
        unknown = [str(y) for y in ys if str(y) not in index]
        if unknown:
            raise ValueError(f"label outside the training set: {unknown[0]}")
        return np.array([index[str(y)] for y in ys], dtype=np.int64)
    out = np.zeros((len(ys), len(label_set)), dtype=np.float32)
    for i, y in enumerate(ys):
        for l in y:
            if str(l) not in index:
                raise ValueError(f"label outside the training set: {l}")
            out[i, index[str(l)]] = 1.0
    return out


def _accuracy(mode: str, logits: np.ndarray, targets: np.ndarray) -> float:
    if len(targets) == 0:
        return 0.0
    if mode == "multiclass":
        return float(np.mean(np.argmax(logits, axis=1) == targets))
    pred = logits > 0.0      # sigmoid(x) > 0.5 iff x > 0
    return float(np.mean(np.all(pred == (targets > 0.5), axis=1)))


def _per_label_f1(logits: np.ndarray, targets: np.ndarray,
                  label_set: list[str]) -> dict[str, float]:
    pred = logits > 0.0
    gold = targets > 0.5
    out = {}
    for j, name in enumerate(label_set):
        tp = float(np.sum(pred[:, j] & gold[:, j]))
        fp = float(np.sum(pred[:, j] & ~gold[:, j]))
        fn = float(np.sum(~pred[:, j] & gold[:, j]))
        denom = 2 * tp + fp + fn
        out[name] = 2 * tp / denom if denom > 0 else 0.0
    return out


def train_probe(train: ProbeSplit, valid: ProbeSplit, test: ProbeSplit,
                config: ProbeConfig, provenance: str = "") -> ProbeReport:
    """Fit one probe with early stopping on validation accuracy; the test
    split is scored exactly once, on the restored best model."""
    config.validate()
    label_set = _label_universe(config.mode, train.y)
    y_train = _targets(config.mode, train.y, label_set)
    y_valid = _targets(config.mode, valid.y, label_set)
    y_test = _targets(config.mode, test.y, label_set)
    x_train = train.x.astype(np.float32)
    n_out = len(label_set)

    rng = stream_rng(config.seed, f"probe-init-d{config.depth}")
    mlp = _Mlp(train.x.shape[1], config.width, config.depth, n_out, rng)
    opt = Adam(mlp.params(), lr=config.lr, clip_norm=None)
    order = stream_rng(config.seed, f"probe-order-d{config.depth}")

    def logits_of(x: np.ndarray) -> np.ndarray:
        with ad.no_grad():
            return mlp(ad.constant(x.astype(np.float32))).data

    best_acc = -1.0
    best = None
    bad = 0
    epochs_run = 0
    for epoch in range(config.epochs):
        perm = order.permutation(len(x_train))
        for lo in range(0, len(perm), config.batch_size):
            sel = perm[lo:lo + config.batch_size]
            out = mlp(ad.constant(x_train[sel]))
            if config.mode == "multiclass":
                loss = ad.mean_all(ad.nll_from_logits(out, y_train[sel]))
            else:
                loss = ad.mean_all(ad.bce_with_logits(out, y_train[sel]))
            opt.zero_grad()
            loss.backward()
            opt.step()
        epochs_run = epoch + 1
        acc = _accuracy(config.mode, logits_of(valid.x), y_valid)
        if acc > best_acc + 1e-12:
            best_acc = acc
            best = [p.data.copy() for p in mlp.params()]
            bad = 0
        else:
            bad += 1
        if bad >= config.patience:
            break

    if best is not None:
        for p, b in zip(mlp.params(), best):
            p.data[...] = b
    report = ProbeReport(
        mode=config.mode,
        depth=config.depth,
        label_set=label_set,
        accuracy={
            "train": _accuracy(config.mode, logits_of(train.x), y_train),
            "valid": _accuracy(config.mode, logits_of(valid.x), y_valid),
            "test": _accuracy(config.mode, logits_of(test.x), y_test),
        },
        provenance=provenance,
        epochs_run=epochs_run,
    )
    if config.mode == "multilabel":
        report.per_label_f1 = _per_label_f1(logits_of(test.x), y_test,
                                            label_set)
    return report


def depth_sweep(train: ProbeSplit, valid: ProbeSplit, test: ProbeSplit,
                depths: Sequence[int], config: ProbeConfig,
                out_dir: str | Path | None = None,
                provenance: str = "", log=None) -> ProbeReport:
    """One probe per depth (fresh per-depth init stream); returns the report
    of the best depth with the whole (depth, accuracy) curve attached."""
    if not depths:
        raise ValueError("depths must be non-empty")
    say = log if log is not None else (lambda msg: None)
    reports = []
    for d in depths:
        rep = train_probe(train, valid, test, replace(config, depth=int(d)),
                          provenance=provenance)
        say(f"depth {d}: test accuracy {rep.accuracy['test']:.4f}")
        reports.append(rep)
    curve = [{"depth": r.depth, "test_accuracy": r.accuracy["test"],
              "valid_accuracy": r.accuracy["valid"]} for r in reports]
    best = max(reports, key=lambda r: (r.accuracy["valid"], -r.depth))
    best.curve = curve

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "depth_sweep.json", "w", encoding="utf-8") as fh:
            json.dump(best.to_dict(), fh, indent=2, sort_keys=True)
        _plot_curve(curve, out_dir / "depth_sweep.svg")
    return best


def _plot_curve(curve: list[dict], path: Path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    xs = [c["depth"] for c in curve]
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot(xs, [c["test_accuracy"] for c in curve], marker="o", label="test")
    ax.plot(xs, [c["valid_accuracy"] for c in curve], marker="s",
            linestyle="--", label="valid")
    ax.set_xlabel("hidden layers")
    ax.set_ylabel("accuracy")
    ax.set_xticks(xs)
    ax.set_ylim(0.0, 1.05)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
