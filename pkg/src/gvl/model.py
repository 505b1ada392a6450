"""The full grounded model: both towers, the joint space, and the caption decoder."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

import torch
from torch import nn

from .config import ModelConfig
from .encoders import EventEncoder, EventSet, ParagraphEncoding, TextEncoder
from .etg import CaptionDecoder
from .teg import JointSpace, SimilarityMatrix


@dataclass
class ModelOutputs:
    event_set: EventSet
    paragraph: ParagraphEncoding | None
    omega_sent: SimilarityMatrix | None
    omega_ctx: SimilarityMatrix | None


class GroundedModel(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        config.validate()
        self.config = config
        self.event_encoder = EventEncoder(config)
        self.text_encoder = TextEncoder(config)
        self.joint_space = JointSpace(config.event_dim, config.text_dim, config.joint_dim)
        self.caption_decoder = CaptionDecoder(
            vocab_size=config.vocab_size, event_dim=config.event_dim, word_dim=config.text_dim
        )

    def encode_video(self, features) -> EventSet:
        return self.event_encoder(features)

    def encode_paragraph(self, sentences) -> ParagraphEncoding:
        return self.text_encoder(sentences)

    def forward_video(self, features, sentences=None) -> ModelOutputs:
        """Run both towers and the joint-space similarities for one video."""
        event_set = self.event_encoder(features)
        if sentences is None:
            return ModelOutputs(event_set, None, None, None)
        paragraph = self.text_encoder(sentences)
        return ModelOutputs(
            event_set=event_set,
            paragraph=paragraph,
            omega_sent=self.joint_space.similarity(event_set.embeddings, paragraph.q_sent, "sent"),
            omega_ctx=self.joint_space.similarity(event_set.embeddings, paragraph.q_ctx, "ctx"),
        )


def save_checkpoint(model: GroundedModel, path: str | Path, extra: dict | None = None) -> None:
    payload = {
        "model_config": dataclasses.asdict(model.config),
        "state_dict": model.state_dict(),
        "extra": extra or {},
    }
    torch.save(payload, path)


def load_checkpoint(
    path: str | Path, expected_config: ModelConfig | None = None
) -> tuple[GroundedModel, dict]:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    config = ModelConfig(**payload["model_config"])
    if expected_config is not None and config != expected_config:
        raise ValueError(
            f"checkpoint config {config} does not match the expected config {expected_config}"
        )
    model = GroundedModel(config)
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, payload["extra"]
