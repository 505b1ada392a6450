"""Dataclass configs for corpus generation, the model, and training.

YAML config files mirror the field names exactly, grouped in three sections::

    gen:   { num_videos: 500, frames_per_video: 128, ... }
    model: { num_queries: 30, event_dim: 64, ... }
    train: { epochs: 30, learning_rate: 0.0003, ... }
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

import yaml

from . import vocab


@dataclass(frozen=True)
class GenConfig:
    """Knobs of the synthetic untrimmed-video corpus generator."""

    num_videos: int = 100
    frames_per_video: int = 64
    feature_dim: int = 16
    events_per_video_range: tuple[int, int] = (2, 4)
    vocab_size: int = 60
    caption_len_range: tuple[int, int] = (3, 6)
    background_noise_std: float = 0.1
    boundary_jitter_std: float = 0.0
    num_archetypes: int = 8
    seed: int = 0

    def validate(self) -> None:
        lo, hi = self.events_per_video_range
        if not (1 <= lo <= hi):
            raise ValueError(f"events_per_video_range must satisfy 1 <= min <= max, got {(lo, hi)}")
        clo, chi = self.caption_len_range
        if not (3 <= clo <= chi):
            raise ValueError(
                f"caption_len_range must satisfy 3 <= min <= max "
                f"(captions need subject+verb+ordinal), got {(clo, chi)}"
            )
        if self.num_videos < 1:
            raise ValueError("num_videos must be >= 1")
        if self.feature_dim < 1:
            raise ValueError("feature_dim must be >= 1")
        if self.num_archetypes < 1:
            raise ValueError("num_archetypes must be >= 1")
        if self.background_noise_std < 0:
            raise ValueError("background_noise_std must be >= 0")
        if self.boundary_jitter_std < 0:
            raise ValueError("boundary_jitter_std must be >= 0")
        if self.vocab_size < self.num_archetypes:
            raise ValueError(
                f"vocab_size={self.vocab_size} smaller than num_archetypes={self.num_archetypes}"
            )
        needed = vocab.filler_token_base(self.num_archetypes, hi)
        if chi > 3:
            needed += 1  # at least one filler token must exist
        if self.vocab_size < needed:
            raise ValueError(
                f"vocab_size={self.vocab_size} too small for the token layout: "
                f"need >= {needed} (specials + {self.num_archetypes} verbs + {hi} ordinals"
                + (" + fillers)" if chi > 3 else ")")
            )
        # Events must fit in the frame grid without forced overlap.
        if self.min_event_frames * hi > self.frames_per_video:
            raise ValueError(
                f"infeasible: up to {hi} events of >= {self.min_event_frames} frames each "
                f"do not fit into frames_per_video={self.frames_per_video}"
            )

    @property
    def min_event_frames(self) -> int:
        # events span at least ~3% of the video so boundaries are resolvable
        return max(2, self.frames_per_video // 32)

    @property
    def max_event_frames(self) -> int:
        return self.frames_per_video // self.events_per_video_range[1]


@dataclass(frozen=True)
class ModelConfig:
    """Architecture and loss hyperparameters of the grounded model."""

    num_queries: int = 30
    feature_dim: int = 16
    event_dim: int = 64
    text_dim: int = 64
    joint_dim: int = 64
    num_encoder_layers: int = 2
    num_decoder_layers: int = 2
    num_heads: int = 4
    vocab_size: int = 60
    count_max: int = 10
    max_caption_len: int = 10
    temperature: float = 0.1
    teg_weight: float = 0.05
    semantic_cost_ratio: float = 1.0

    def validate(self) -> None:
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")
        if self.teg_weight < 0:
            raise ValueError("teg_weight must be >= 0")
        if self.semantic_cost_ratio < 0:
            raise ValueError("semantic_cost_ratio must be >= 0")
        if self.num_queries < 1:
            raise ValueError("num_queries must be >= 1")
        if self.count_max < 1:
            raise ValueError("count_max must be >= 1")
        for name in ("event_dim", "text_dim", "joint_dim"):
            if getattr(self, name) % self.num_heads != 0:
                raise ValueError(f"{name} must be divisible by num_heads")


@dataclass(frozen=True)
class TrainConfig:
    """Optimization-loop knobs; loss weights live in ModelConfig."""

    epochs: int = 30
    batch_size: int = 1
    learning_rate: float = 3e-4
    weight_decay: float = 1e-4
    clip_norm: float = 1.0
    seed: int = 0
    early_stop_patience: int = 10
    freeze_text_encoder: bool = False
    cost_mode: str = "contrastive"
    disable_teg: bool = False
    disable_captioner: bool = False

    def validate(self) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.cost_mode not in ("contrastive", "caption", "none"):
            raise ValueError(f"unknown cost_mode {self.cost_mode!r}")


_SECTIONS = {"gen": GenConfig, "model": ModelConfig, "train": TrainConfig}
_TUPLE_FIELDS = {"events_per_video_range", "caption_len_range"}


def _build(cls, data: dict):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kwargs = {}
    for key, value in data.items():
        if key in _TUPLE_FIELDS and isinstance(value, (list, tuple)):
            value = tuple(value)
        kwargs[key] = value
    cfg = cls(**kwargs)
    cfg.validate()
    return cfg


def load_config(path: str | Path) -> dict:
    """Parse a YAML config into {'gen': GenConfig, 'model': ModelConfig, 'train': TrainConfig}.

    Absent sections fall back to defaults. Unknown keys are rejected.
    """
    with open(path) as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise ValueError(f"config root must be a mapping, got {type(raw).__name__}")
    unknown = set(raw) - set(_SECTIONS)
    if unknown:
        raise ValueError(f"unknown config sections: {sorted(unknown)} (expected gen/model/train)")
    return {name: _build(cls, raw.get(name) or {}) for name, cls in _SECTIONS.items()}


def load_gen_config(path: str | Path) -> GenConfig:
    """Parse a YAML file holding either a bare GenConfig mapping or a 'gen:' section."""
    with open(path) as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise ValueError(f"config root must be a mapping, got {type(raw).__name__}")
    if "gen" in raw:
        raw = raw["gen"] or {}
    return _build(GenConfig, raw)
