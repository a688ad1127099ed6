"""Run configuration: a TOML file with [data], [model], [training] and
[probe] sections plus a global seed.

Unknown keys are rejected, defaults are merged in, and the effective
configuration can be echoed into an output directory so every run records
exactly what it ran with.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:   # 3.10
    import tomli as tomllib

from .model import VARIANTS, ModelConfig
from .probe import MODES, ProbeConfig
from .training import TrainConfig


class ConfigError(ValueError):
    """Malformed run configuration: unknown key, wrong type, or bad value."""


DEFAULTS: dict = {
    "seed": 0,
    "data": {
        "dir": "data",
        "train": "train.jsonl",
        "valid": "valid.jsonl",
        "test": "test.jsonl",
        "min_freq": 1,
    },
    "model": {
        "variant": "EVE",
        "d_emb": 32,
        "d_h": 64,
        "d_z": 16,
        "word_dropout_rate": 0.25,
        "beam_width": 4,
        "max_decode_len": 30,
        "guu_kappa": 30.0,
        "guu_eps": 1.0,
        "dtype": "float32",
    },
    "training": {
        "batch_size": 64,
        "lr": 1e-3,
        "grad_clip": 5.0,
        "lambda_xdelta": 1.0,
        "stage_a_max_epochs": 30,
        "stage_b_epochs": 10,
        "patience": 3,
        "anneal_steepness": 0.0025,
        "two_stage": True,
        "anneal": True,
    },
    "probe": {
        "depths": [0, 1, 2],
        "width": 128,
        "mode": "multiclass",
        "epochs": 50,
        "lr": 1e-3,
        "patience": 5,
        "batch_size": 128,
    },
}


def _coerce(path: str, want, value):
    """Accept a value only when it matches the default's type; ints are
    welcome where floats are expected, bools nowhere else."""
    if isinstance(want, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{path} must be a boolean, got {value!r}")
        return value
    if isinstance(want, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path} must be an integer, got {value!r}")
        return value
    if isinstance(want, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path} must be a number, got {value!r}")
        return float(value)
    if isinstance(want, str):
        if not isinstance(value, str):
            raise ConfigError(f"{path} must be a string, got {value!r}")
        return value
    if isinstance(want, list):
        ok = isinstance(value, list) and all(
            isinstance(v, int) and not isinstance(v, bool) for v in value)
        if not ok:
            raise ConfigError(f"{path} must be a list of integers")
        return list(value)
    raise ConfigError(f"{path}: unsupported value type")   # pragma: no cover


def _merge_section(name: str, defaults: dict, given: dict) -> dict:
    out = dict(defaults)
    for key, value in given.items():
        dotted = f"{name}.{key}" if name else key
        if key not in defaults:
            raise ConfigError(f"unknown key: {dotted}")
        out[key] = _coerce(dotted, defaults[key], value)
    return out


@dataclass
class RunConfig:
    seed: int
    data: dict
    model: dict
    training: dict
    probe: dict

    def validate(self) -> None:
        if self.model["variant"] not in VARIANTS:
            raise ConfigError(f"model.variant must be one of {VARIANTS}")
        if self.probe["mode"] not in MODES:
            raise ConfigError(f"probe.mode must be one of {MODES}")
        if not self.probe["depths"]:
            raise ConfigError("probe.depths must be non-empty")
        if any(d < 0 for d in self.probe["depths"]):
            raise ConfigError("probe.depths must be non-negative")
        if self.data["min_freq"] < 1:
            raise ConfigError("data.min_freq must be >= 1")

    # -- per-module views -------------------------------------------------

    def data_path(self, which: str, base: str | Path | None = None) -> Path:
        root = Path(base) if base is not None else Path(self.data["dir"])
        return root / self.data[which]

    def model_config(self, src_vocab_size: int,
                     tgt_vocab_size: int) -> ModelConfig:
        m = self.model
        return ModelConfig(src_vocab_size=src_vocab_size,
                           tgt_vocab_size=tgt_vocab_size,
                           **{k: m[k] for k in m})

    def train_config(self) -> TrainConfig:
        return TrainConfig(seed=self.seed, **self.training)

    def probe_config(self, depth: int = 0) -> ProbeConfig:
        p = self.probe
        return ProbeConfig(depth=depth, seed=self.seed,
                           **{k: p[k] for k in p if k not in ("depths",)})

    def to_dict(self) -> dict:
        return {"seed": self.seed, "data": dict(self.data),
                "model": dict(self.model), "training": dict(self.training),
                "probe": dict(self.probe)}

    def echo(self, out_dir: str | Path) -> Path:
        """Write the defaults-merged configuration next to a run's outputs."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        path = out / "effective_config.json"
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
        return path


def load_run_config(path: str | Path | None = None,
                    overrides: dict | None = None) -> RunConfig:
    """Parse a TOML file (or start from defaults), apply overrides, validate.

    ``overrides`` uses the same nested shape as the file and wins over it;
    command-line flags funnel through here so a run has one effective config.
    """
    raw: dict = {}
    if path is not None:
        with open(path, "rb") as fh:
            try:
                raw = tomllib.load(fh)
            except tomllib.TOMLDecodeError as err:
                raise ConfigError(f"{path}: {err}") from err
    merged = _apply(DEFAULTS, raw, source=str(path) if path else "config")
    if overrides:
        merged = _apply(merged, overrides, source="overrides")
    cfg = RunConfig(seed=merged["seed"], data=merged["data"],
                    model=merged["model"], training=merged["training"],
                    probe=merged["probe"])
    cfg.validate()
    return cfg


def _apply(base: dict, given: dict, source: str) -> dict:
    known = set(DEFAULTS)
    for key in given:
        if key not in known:
            raise ConfigError(f"unknown key: {key}")
    out = {"seed": base["seed"]}
    if "seed" in given:
        out["seed"] = _coerce("seed", DEFAULTS["seed"], given["seed"])
    for section in ("data", "model", "training", "probe"):
        sub = given.get(section, {})
        if not isinstance(sub, dict):
            raise ConfigError(f"[{section}] must be a table")
        out[section] = _merge_section(section, base[section], sub)
    return out
