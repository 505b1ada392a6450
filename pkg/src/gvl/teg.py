"""Text-to-event grounding: joint-space projection, cosine similarity, contrastive loss.

Both towers are linearly projected into a shared space; the text projection is
shared between the context-free and context-aware sentence flavors. The
contrastive loss is the standard softmax form over the N in-video events, with
the assigned proposal as the positive column, averaged over sentences so its
magnitude does not scale with K.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

NORM_FLOOR = 1e-8


@dataclass
class SimilarityMatrix:
    omega: torch.Tensor  # (K, N), entries in [-1, 1]
    flavor: str  # "sent" | "ctx"


def cosine_matrix(text: torch.Tensor, events: torch.Tensor) -> torch.Tensor:
    """(K, N) cosine similarities with a norm floor guarding zero rows."""
    t = text / text.norm(dim=-1, keepdim=True).clamp_min(NORM_FLOOR)
    e = events / events.norm(dim=-1, keepdim=True).clamp_min(NORM_FLOOR)
    return t @ e.T


class JointSpace(nn.Module):
    """Per-modality linear maps into the joint space plus the similarity op."""

    def __init__(self, event_dim: int, text_dim: int, joint_dim: int):
        super().__init__()
        self.event_proj = nn.Linear(event_dim, joint_dim)
        self.text_proj = nn.Linear(text_dim, joint_dim)

    def similarity(
        self, event_embeddings: torch.Tensor, text_embeddings: torch.Tensor, flavor: str
    ) -> SimilarityMatrix:
        if flavor not in ("sent", "ctx"):
            raise ValueError(f"unknown flavor {flavor!r}")
        if event_embeddings.shape[-1] != self.event_proj.in_features:
            raise ValueError(
                f"event embeddings have dim {event_embeddings.shape[-1]}, "
                f"expected {self.event_proj.in_features}"
            )
        if text_embeddings.shape[-1] != self.text_proj.in_features:
            raise ValueError(
                f"text embeddings have dim {text_embeddings.shape[-1]}, "
                f"expected {self.text_proj.in_features}"
            )
        omega = cosine_matrix(self.text_proj(text_embeddings), self.event_proj(event_embeddings))
        return SimilarityMatrix(omega=omega, flavor=flavor)


def _positive_columns(assignment, k: int, n: int) -> list[int]:
    pairs = list(getattr(assignment, "pairs", assignment))
    cols = [-1] * k
    seen = set()
    for row, col in pairs:
        if not (0 <= row < k and 0 <= col < n):
            raise ValueError(f"assignment pair ({row}, {col}) out of range for a {k}x{n} similarity")
        if col in seen:
            raise ValueError(f"assignment maps two sentences to event {col}")
        seen.add(col)
        cols[row] = col
    if any(c < 0 for c in cols):
        raise ValueError("assignment must cover every sentence")
    return cols


def teg_loss(omega, assignment, temperature: float) -> torch.Tensor:
    """Contrastive grounding loss for one similarity flavor, averaged over sentences."""
    if temperature <= 0:
        raise ValueError("temperature must be > 0")
    mat = omega.omega if isinstance(omega, SimilarityMatrix) else omega
    k, n = mat.shape
    cols = _positive_columns(assignment, k, n)
    log_probs = F.log_softmax(mat / temperature, dim=1)
    return -log_probs[torch.arange(k), cols].mean()


def total_teg_loss(omega_sent, omega_ctx, assignment, temperature: float) -> torch.Tensor:
    """Sum of the contrastive losses of both sentence flavors."""
    return teg_loss(omega_sent, assignment, temperature) + teg_loss(
        omega_ctx, assignment, temperature
    )
