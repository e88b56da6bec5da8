"""Experiment configuration: one document covering data, encoder and training.

Parsing is fail-closed (unknown keys are rejected with the offending key
named) and round-trips losslessly through ``to_dict``/``from_dict``.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

from .encoder import EncoderConfig
from .errors import ConfigError
from .optim import LlrdConfig
from .synth import SynthConfig


@dataclass(frozen=True)
class GenConfig:
    n_train_utts: int = 10       # per speaker
    n_eval_utts: int = 6         # per speaker, disjoint from training
    n_target_trials: int = 500
    n_nontarget_trials: int = 500

    def __post_init__(self):
        if self.n_train_utts < 1 or self.n_eval_utts < 1:
            raise ConfigError("per-speaker utterance counts must be >= 1")
        if self.n_target_trials < 0 or self.n_nontarget_trials < 0:
            raise ConfigError("trial counts must be non-negative")


@dataclass(frozen=True)
class TrainConfig:
    backend: str = "mhfa"
    constraint: str = "none"
    head_dim: int = 16
    n_heads: int = 8
    emb_dim: int = 32
    margin: float = 0.2
    scale: float = 30.0
    lambda_reg: float = 1e-4
    lr_backend: float = 5e-3
    lr_encoder: float = 2e-4
    xi: float = 1.5
    epoch_decay: float = 0.95
    freeze_encoder: bool = False
    epochs: int = 30
    batch_size: int = 32
    segment_frames: int = 40
    warmup_steps: int = 100
    lmft_enabled: bool = False
    lmft_epochs: int = 3
    lmft_margin: float = 0.5
    lmft_segment_frames: int = 60
    seed: int = 1

    def __post_init__(self):
        if self.backend not in ("topattn", "wavg", "mhfa"):
            raise ConfigError(f"unknown backend {self.backend!r}")
        if self.epochs < 0 or self.lmft_epochs < 0:
            raise ConfigError("epoch counts must be non-negative")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.segment_frames < 1 or self.lmft_segment_frames < 1:
            raise ConfigError("segment lengths must be >= 1")
        if self.lambda_reg < 0:
            raise ConfigError("lambda_reg must be non-negative")

    def llrd(self):
        return LlrdConfig(
            lr_backend=self.lr_backend,
            lr_encoder_base=self.lr_encoder,
            xi=self.xi,
            epoch_decay=self.epoch_decay,
            freeze_encoder=self.freeze_encoder,
        )


@dataclass(frozen=True)
class ExperimentConfig:
    synth: SynthConfig = field(default_factory=SynthConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    gen: GenConfig = field(default_factory=GenConfig)

    def __post_init__(self):
        if self.encoder.input_dim != self.synth.frame_dim:
            raise ConfigError(
                f"encoder.input_dim ({self.encoder.input_dim}) must equal "
                f"synth.frame_dim ({self.synth.frame_dim})"
            )

    def to_dict(self):
        return {
            "synth": dataclasses.asdict(self.synth),
            "encoder": dataclasses.asdict(self.encoder),
            "train": dataclasses.asdict(self.train),
            "gen": dataclasses.asdict(self.gen),
        }

    def replace(self, section, **changes):
        cur = getattr(self, section)
        return dataclasses.replace(self, **{section: dataclasses.replace(cur, **changes)})


_SECTIONS = {
    "synth": SynthConfig,
    "encoder": EncoderConfig,
    "train": TrainConfig,
    "gen": GenConfig,
}


def _build_section(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"config section {where!r} must be an object")
    known = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigError(f"unknown config key {where}.{key}")
    return cls(**data)


def from_dict(data):
    if not isinstance(data, dict):
        raise ConfigError("config root must be an object")
    for key in data:
        if key not in _SECTIONS:
            raise ConfigError(f"unknown config key {key}")
    kwargs = {
        name: _build_section(cls, data.get(name, {}), name)
        for name, cls in _SECTIONS.items()
    }
    return ExperimentConfig(**kwargs)


def load_config(path):
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return from_dict(data)


def save_config(cfg, path):
    with open(path, "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def config_hash(cfg):
    blob = json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()
