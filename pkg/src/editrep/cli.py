"""``editrep``: one binary covering the whole workflow.

Subcommands: gen-data (synthetic corpora), align (edit inspection), train,
eval (beam decode + intrinsic metrics), encode (representation export),
probe (depth-swept classifiers), score (metrics on plain token files).

Conventions: human diagnostics go to stderr; with ``--json`` stdout carries
exactly one JSON document.  Exit codes: 0 ok, 2 bad flags or config, 3 I/O
failure, 4 training divergence, 5 checkpoint/data vocabulary mismatch,
6 unlabeled data handed to the probe.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

from .alignment import AlignedEdit, align, edit_stats
from .checkpoint import CheckpointError, checkpoint_hashes, load_checkpoint
from .config import DEFAULTS, ConfigError, RunConfig, load_run_config
from .corpus import (
    RULE_CLASSES,
    EditExample,
    build_vocab,
    gen_synthetic,
    load_jsonl,
    save_jsonl,
    split,
)
from .metrics import bleu4, evaluate_model, gleu, token_accuracy
from .model import EditModel
from .probe import (
    ProbeSplit,
    depth_sweep,
    extract_representations,
    save_representations,
)
from .training import TrainingDiverged, train

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_DIVERGED = 4
EXIT_VOCAB_MISMATCH = 5
EXIT_UNLABELED = 6


class CliError(Exception):
    """Failure with a chosen exit code; the message goes to stderr."""

    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _say(msg: str) -> None:
    print(msg, file=sys.stderr)


def _finish(args, payload: dict, human: list[str]) -> None:
    if getattr(args, "json", False):
        out = dict(payload)
        out["timestamp"] = datetime.now(timezone.utc).isoformat(
            timespec="seconds")
        print(json.dumps(out, indent=2, sort_keys=True))
    else:
        for line in human:
            print(line)


def _load_corpus(path: Path) -> list[EditExample]:
    try:
        return load_jsonl(path)
    except (OSError, ValueError) as err:
        raise CliError(EXIT_IO, f"cannot read corpus {path}: {err}") from err


def _load_model(path: str) -> tuple[EditModel, dict]:
    try:
        return load_checkpoint(path)
    except OSError as err:
        raise CliError(EXIT_IO, f"cannot read checkpoint {path}: {err}") \
            from err
    except CheckpointError as err:
        raise CliError(EXIT_IO, f"bad checkpoint {path}: {err}") from err


def _file_sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _check_vocab_match(ckpt_path: str, data_dir: Path,
                       cfg: RunConfig) -> None:
    """The checkpoint must have been trained on this corpus's vocabulary;
    the corpus's train split is its vocabulary source."""
    train_path = cfg.data_path("train", data_dir)
    examples = _load_corpus(train_path)
    sv = build_vocab(examples, "source", min_freq=cfg.data["min_freq"])
    tv = build_vocab(examples, "target", min_freq=cfg.data["min_freq"])
    want_src, want_tgt = checkpoint_hashes(ckpt_path)
    if (sv.content_hash(), tv.content_hash()) != (want_src, want_tgt):
        raise CliError(
            EXIT_VOCAB_MISMATCH,
            f"vocabulary mismatch: checkpoint {ckpt_path} was not trained "
            f"on the corpus under {data_dir}")


def _resolve_data_dir(args, cfg: RunConfig) -> Path:
    return Path(args.data) if args.data else Path(cfg.data["dir"])


def _config_from_flags(args, extra: dict | None = None) -> RunConfig:
    overrides: dict = dict(extra or {})
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    return load_run_config(getattr(args, "config", None), overrides)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_gen_data(args) -> None:
    if args.n < 1:
        raise CliError(EXIT_USAGE, "--n must be at least 1")
    classes = tuple(args.classes.split(",")) if args.classes else RULE_CLASSES
    ratios = _parse_ratios(args.ratios)
    examples = gen_synthetic(args.n, classes, seed=args.seed)
    parts = dict(zip(("train", "valid", "test"),
                     split(examples, ratios, seed=args.seed)))
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        stats = {}
        for name, exs in parts.items():
            save_jsonl(out / f"{name}.jsonl", exs)
            if exs:
                stats[name] = edit_stats(
                    [align(e.src, e.tgt) for e in exs]).to_dict()
        with open(out / "stats.json", "w", encoding="utf-8") as fh:
            json.dump(stats, fh, indent=2, sort_keys=True)
    except OSError as err:
        raise CliError(EXIT_IO, f"cannot write to {out}: {err}") from err
    payload = {"out": str(out), "n": args.n, "seed": args.seed,
               "classes": list(classes),
               "sizes": {k: len(v) for k, v in parts.items()},
               "stats": stats}
    _finish(args, payload, [
        f"wrote {', '.join(f'{len(v)} {k}' for k, v in parts.items())} "
        f"examples to {out}"])


def _parse_ratios(text: str) -> tuple[float, float, float]:
    try:
        parts = tuple(float(x) for x in text.split(","))
    except ValueError:
        raise CliError(EXIT_USAGE, f"bad --ratios: {text!r}")
    if len(parts) != 3:
        raise CliError(EXIT_USAGE, "--ratios needs three comma-separated "
                                   "numbers")
    return parts


def cmd_align(args) -> None:
    if bool(args.src is not None) == bool(args.file):
        raise CliError(EXIT_USAGE, "give either --src/--tgt or --file")
    if args.src is not None:
        if args.tgt is None:
            raise CliError(EXIT_USAGE, "--src requires --tgt")
        pairs = [(args.src.split(), args.tgt.split())]
    else:
        examples = _load_corpus(Path(args.file))[:args.limit]
        pairs = [(list(e.src), list(e.tgt)) for e in examples]
    edits = [align(s, t) for s, t in pairs]
    payload = {"edits": [_edit_dict(e) for e in edits]}
    _finish(args, payload, [_render_edit(e) for e in edits])


def _edit_dict(e: AlignedEdit) -> dict:
    return {"src_padded": list(e.src_padded), "tgt_padded": list(e.tgt_padded),
            "tags": [t.value for t in e.tags], "m": e.m}


def _render_edit(e: AlignedEdit) -> str:
    w = max([len(t) for t in e.src_padded] + [1])
    lines = [" ".join(f"{t:>{w}}" for t in e.src_padded),
             " ".join(f"{t.value:>{w}}" for t in e.tags),
             " ".join(f"{t:>{w}}" for t in e.tgt_padded)]
    return "\n".join(lines) + "\n"


def cmd_train(args) -> None:
    extra: dict = {}
    if args.variant:
        extra["model"] = {"variant": args.variant}
    cfg = _config_from_flags(args, extra)
    data_dir = _resolve_data_dir(args, cfg)
    train_examples = _load_corpus(cfg.data_path("train", data_dir))
    valid_examples = _load_corpus(cfg.data_path("valid", data_dir))
    sv = build_vocab(train_examples, "source", min_freq=cfg.data["min_freq"])
    tv = build_vocab(train_examples, "target", min_freq=cfg.data["min_freq"])
    model = EditModel(cfg.model_config(len(sv), len(tv)), sv, tv,
                      seed=cfg.seed)
    out = Path(args.out)
    cfg.echo(out)
    _say(f"training {model.config.variant} on {len(train_examples)} examples "
         f"({len(sv)} source / {len(tv)} target types)")
    report = train(model, train_examples, valid_examples, cfg.train_config(),
                   out_dir=out, resume=args.resume, log=_say)
    payload = report.to_dict()
    payload["out"] = str(out)
    _finish(args, payload, [
        f"stage A epochs: {report.stage_a_epochs}",
        f"stage B epochs: {report.stage_b_epochs}",
        f"best valid loss: {report.best_valid_total:.4f}",
        f"checkpoint: {report.best_checkpoint}"])


def cmd_eval(args) -> None:
    cfg = _config_from_flags(args)
    model, _ = _load_model(args.ckpt)
    data_dir = _resolve_data_dir(args, cfg)
    _check_vocab_match(args.ckpt, data_dir, cfg)
    examples = _load_corpus(cfg.data_path(args.split, data_dir))
    if not examples:
        raise CliError(EXIT_IO, f"no examples in the {args.split} split")
    report, hyps = evaluate_model(model, examples, beam_width=args.beam,
                                  log=_say)
    report.extras = {
        "checkpoint": args.ckpt,
        "checkpoint_sha256": _file_sha256(args.ckpt),
        "model_config": model.config.to_dict(),
        "split": args.split,
        "beam_width": args.beam or model.config.beam_width,
    }
    payload = report.to_dict()
    if args.out:
        out = Path(args.out)
        try:
            out.mkdir(parents=True, exist_ok=True)
            with open(out / "score_report.json", "w", encoding="utf-8") as fh:
                json.dump(payload, fh, indent=2, sort_keys=True)
            with open(out / "hypotheses.txt", "w", encoding="utf-8") as fh:
                fh.writelines(" ".join(h) + "\n" for h in hyps)
        except OSError as err:
            raise CliError(EXIT_IO, f"cannot write to {out}: {err}") from err
        cfg.echo(out)
    _finish(args, payload, [
        f"bleu  {report.bleu:.4f}",
        f"gleu  {report.gleu:.4f}",
        f"token accuracy {report.token_accuracy:.4f}",
        f"cross entropy  {report.cross_entropy:.4f} nats/token"])


def cmd_encode(args) -> None:
    cfg = _config_from_flags(args)
    model, _ = _load_model(args.ckpt)
    data_dir = _resolve_data_dir(args, cfg)
    _check_vocab_match(args.ckpt, data_dir, cfg)
    examples = _load_corpus(cfg.data_path(args.split, data_dir))
    reps = extract_representations(model, examples)
    ckpt_hash = _file_sha256(args.ckpt)
    try:
        save_representations(args.out, reps, checkpoint_hash=ckpt_hash)
    except OSError as err:
        raise CliError(EXIT_IO, f"cannot write {args.out}: {err}") from err
    payload = {"out": args.out, "n": int(reps.shape[0]),
               "d": int(reps.shape[1]), "checkpoint_sha256": ckpt_hash}
    _finish(args, payload, [f"wrote {reps.shape[0]} x {reps.shape[1]} "
                            f"representations to {args.out}"])


def _probe_labels(mode: str, examples: list[EditExample]):
    if mode == "multiclass":
        missing = sum(1 for e in examples if not e.labels)
        if missing:
            raise CliError(EXIT_UNLABELED,
                           f"{missing} examples carry no label; the probe "
                           f"needs labeled data")
        multi = [e for e in examples if len(e.labels) > 1]
        if multi:
            raise CliError(EXIT_USAGE,
                           "examples carry several labels; use --mode "
                           "multilabel")
        return [next(iter(e.labels)) for e in examples]
    if all(not e.labels for e in examples):
        raise CliError(EXIT_UNLABELED, "every example is unlabeled; the "
                                       "probe needs labeled data")
    return [e.labels for e in examples]


def cmd_probe(args) -> None:
    extra: dict = {"probe": {}}
    if args.depths:
        try:
            extra["probe"]["depths"] = [int(x) for x in args.depths.split(",")]
        except ValueError:
            raise CliError(EXIT_USAGE, f"bad --depths: {args.depths!r}")
    if args.mode:
        extra["probe"]["mode"] = args.mode
    cfg = _config_from_flags(args, extra)
    model, _ = _load_model(args.ckpt)
    data_dir = _resolve_data_dir(args, cfg)
    _check_vocab_match(args.ckpt, data_dir, cfg)

    mode = cfg.probe["mode"]
    splits = {}
    for name in ("train", "valid", "test"):
        examples = _load_corpus(cfg.data_path(name, data_dir))
        splits[name] = ProbeSplit(extract_representations(model, examples),
                                  _probe_labels(mode, examples))
    report = depth_sweep(splits["train"], splits["valid"], splits["test"],
                         cfg.probe["depths"], cfg.probe_config(),
                         out_dir=args.out,
                         provenance=_file_sha256(args.ckpt), log=_say)
    if args.out:
        cfg.echo(args.out)
    payload = report.to_dict()
    _finish(args, payload, [
        f"best depth {report.depth}: test accuracy "
        f"{report.accuracy['test']:.4f}",
        "curve: " + ", ".join(f"d{c['depth']}={c['test_accuracy']:.4f}"
                              for c in report.curve)])


def _read_token_lines(path: str) -> list[list[str]]:
    try:
        with open(path, encoding="utf-8") as fh:
            return [line.split() for line in fh]
    except OSError as err:
        raise CliError(EXIT_IO, f"cannot read {path}: {err}") from err


def cmd_score(args) -> None:
    hyps = _read_token_lines(args.hyp)
    refs = _read_token_lines(args.ref)
    if len(hyps) != len(refs):
        raise CliError(EXIT_USAGE, "hypothesis and reference files differ "
                                   "in length")
    payload: dict = {"n_examples": len(hyps), "bleu": bleu4(hyps, refs)}
    if args.src:
        srcs = _read_token_lines(args.src)
        if len(srcs) != len(hyps):
            raise CliError(EXIT_USAGE, "source file differs in length")
        payload["gleu"] = gleu(srcs, hyps, refs)
    acc = [token_accuracy(h, r) for h, r in zip(hyps, refs)]
    payload["token_accuracy"] = sum(acc) / len(acc) if acc else 0.0
    human = [f"bleu  {payload['bleu']:.4f}"]
    if "gleu" in payload:
        human.append(f"gleu  {payload['gleu']:.4f}")
    human.append(f"token accuracy {payload['token_accuracy']:.4f}")
    _finish(args, payload, human)


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    d = DEFAULTS
    parser = argparse.ArgumentParser(
        prog="editrep",
        description="Learn and evaluate continuous representations of "
                    "document edits.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        p.add_argument("--json", action="store_true",
                       help="emit one machine-readable JSON document on "
                            "stdout")
        if config:
            p.add_argument("--config", metavar="TOML",
                           help="run configuration file; flags override it")
            p.add_argument("--seed", type=int, default=None,
                           help=f"global seed (default {d['seed']})")

    p = sub.add_parser("gen-data", help="generate a synthetic edit corpus")
    p.add_argument("--n", type=int, required=True,
                   help="number of examples before splitting")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--classes",
                   help=f"comma-separated rule classes "
                        f"(default all: {','.join(RULE_CLASSES)})")
    p.add_argument("--seed", type=int, default=0, help="seed (default 0)")
    p.add_argument("--ratios", default="0.8,0.1,0.1",
                   help="train,valid,test fractions (default 0.8,0.1,0.1)")
    common(p, config=False)
    p.set_defaults(handler=cmd_gen_data)

    p = sub.add_parser("align", help="inspect token alignments")
    p.add_argument("--src", help="source tokens (whitespace separated)")
    p.add_argument("--tgt", help="target tokens (whitespace separated)")
    p.add_argument("--file", help="JSONL corpus to align instead")
    p.add_argument("--limit", type=int, default=5,
                   help="examples to show from --file (default 5)")
    common(p, config=False)
    p.set_defaults(handler=cmd_align)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--data", help=f"corpus directory "
                                  f"(default {d['data']['dir']})")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--variant", choices=("EVE", "YIN", "GUU"),
                   help=f"encoder variant "
                        f"(default {d['model']['variant']})")
    p.add_argument("--resume", action="store_true",
                   help="continue from the last checkpoint in --out")
    common(p)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("eval", help="beam-decode a split and score it")
    p.add_argument("--ckpt", required=True, help="checkpoint file")
    p.add_argument("--data", help="corpus directory")
    p.add_argument("--split", choices=("train", "valid", "test"),
                   default="test", help="split to score (default test)")
    p.add_argument("--beam", type=int, default=None,
                   help=f"beam width (default from checkpoint, "
                        f"{d['model']['beam_width']})")
    p.add_argument("--out", help="directory for the report and hypotheses")
    common(p)
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("encode", help="export edit representations")
    p.add_argument("--ckpt", required=True, help="checkpoint file")
    p.add_argument("--data", help="corpus directory")
    p.add_argument("--split", choices=("train", "valid", "test"),
                   default="test", help="split to encode (default test)")
    p.add_argument("--out", required=True, help="output representation file")
    common(p)
    p.set_defaults(handler=cmd_encode)

    p = sub.add_parser("probe", help="train probe classifiers over "
                                     "representations")
    p.add_argument("--ckpt", required=True, help="checkpoint file")
    p.add_argument("--data", help="corpus directory")
    p.add_argument("--depths",
                   help=f"comma-separated hidden-layer counts (default "
                        f"{','.join(map(str, d['probe']['depths']))})")
    p.add_argument("--mode", choices=("multiclass", "multilabel"),
                   help=f"label mode (default {d['probe']['mode']})")
    p.add_argument("--out", help="directory for the report and plot")
    common(p)
    p.set_defaults(handler=cmd_probe)

    p = sub.add_parser("score", help="score plain token files")
    p.add_argument("--hyp", required=True, help="hypothesis file, one "
                                                "sentence per line")
    p.add_argument("--ref", required=True, help="reference file")
    p.add_argument("--src", help="source file (enables GLEU)")
    common(p, config=False)
    p.set_defaults(handler=cmd_score)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.handler(args)
        return EXIT_OK
    except CliError as err:
        _say(f"error: {err}")
        return err.code
    except ConfigError as err:
        _say(f"config error: {err}")
        return EXIT_USAGE
    except TrainingDiverged as err:
        _say(f"training diverged: {err}")
        return EXIT_DIVERGED
    except FileNotFoundError as err:
        _say(f"missing file: {err}")
        return EXIT_IO
    except OSError as err:
        _say(f"I/O error: {err}")
        return EXIT_IO
    except ValueError as err:
        # library-level validation of flag-supplied values
        _say(f"error: {err}")
        return EXIT_USAGE


if __name__ == "__main__":   # pragma: no cover
    sys.exit(main())
