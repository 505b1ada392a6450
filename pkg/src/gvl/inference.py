"""Task heads on a trained model: sentence grounding (single and multi) and dense captioning."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .etg import predict_count
from .matcher import hungarian
from .model import GroundedModel

GROUNDING_STRATEGIES = ("argmax", "hungarian")


@dataclass
class GroundingResult:
    segments: list[tuple[float, float]]  # one per query sentence
    omega: np.ndarray  # (K, N) similarity rows, diagnostics
    collisions: int  # queries sharing an event (argmax strategy only)


@dataclass
class DvcItem:
    segment: tuple[float, float]
    tokens: tuple[int, ...]
    confidence: float


@dataclass
class DvcResult:
    items: list[DvcItem]  # sorted by start time
    selected_count: int


@torch.no_grad()
def ground_single(sentence, features, model: GroundedModel) -> tuple[float, float]:
    """Localize one sentence: context-free encoding, most similar event wins."""
    event_set = model.encode_video(features)
    paragraph = model.encode_paragraph([sentence])
    omega = model.joint_space.similarity(event_set.embeddings, paragraph.q_sent, "sent").omega
    best = int(omega[0].argmax().item())
    start, end = event_set.segments[best].tolist()
    return (start, end)


@torch.no_grad()
def ground_multi(
    sentences, features, model: GroundedModel, strategy: str = "hungarian"
) -> GroundingResult:
    """Localize a paragraph with context-aware encodings.

    argmax picks each sentence's most similar event independently (collisions
    possible); hungarian assigns events one-to-one, maximizing total similarity.
    """
    if strategy not in GROUNDING_STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}, expected one of {GROUNDING_STRATEGIES}")
    event_set = model.encode_video(features)
    paragraph = model.encode_paragraph(sentences)
    omega = model.joint_space.similarity(event_set.embeddings, paragraph.q_ctx, "ctx").omega
    if strategy == "argmax":
        cols = omega.argmax(dim=1).tolist()
        collisions = len(cols) - len(set(cols))
    else:
        assignment = hungarian(-omega.double().numpy())
        cols = [assignment.column_of(k) for k in range(len(sentences))]
        collisions = 0
    segments = [tuple(event_set.segments[c].tolist()) for c in cols]
    return GroundingResult(segments=segments, omega=omega.numpy(), collisions=collisions)


@torch.no_grad()
def dense_caption(features, model: GroundedModel, max_len: int | None = None) -> DvcResult:
    """Detect and describe events: count-head-many proposals, ranked by confidence."""
    event_set = model.encode_video(features)
    n = event_set.confidence_logits.shape[0]
    count = min(max(predict_count(event_set.count_logits), 1), n)
    order = torch.argsort(event_set.confidence_logits, descending=True, stable=True)
    limit = max_len if max_len is not None else model.config.max_caption_len
    items = []
    for idx in order[:count].tolist():
        caption = model.caption_decoder.decode(event_set.embeddings[idx], max_len=limit)
        items.append(
            DvcItem(
                segment=tuple(event_set.segments[idx].tolist()),
                tokens=caption.tokens,
                confidence=float(torch.sigmoid(event_set.confidence_logits[idx]).item()),
            )
        )
    items.sort(key=lambda item: item.segment)
    return DvcResult(items=items, selected_count=count)
