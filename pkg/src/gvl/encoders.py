"""The two unimodal towers: video -> event proposals, paragraph -> sentence embeddings.

The event encoder projects frame features, adds sinusoidal temporal positions,
refines them with a self-attention encoder, and lets N learnable queries
cross-attend to produce event embeddings. Three heads read the decoder output:
a 2-layer perceptron emitting (center, width) squashed to (0, 1) — so every
segment is valid by construction for any parameter values — a linear
confidence head, and a linear event-count head on the mean-pooled output.

The text encoder is hierarchical: a word-level self-attention encoder with
attention pooling yields one context-free embedding per sentence (q_sent);
those rows, concatenated with learned sentence-index position embeddings, pass
through one cross-sentence self-attention layer to give the context-aware
flavor (q_ctx). All attention uses dropout 0 so encoding is deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .config import ModelConfig


@dataclass
class EventSet:
    """N event proposals: one embedding, segment and confidence logit per query."""

    embeddings: torch.Tensor  # (N, event_dim)
    segments: torch.Tensor  # (N, 2), 0 <= start < end <= 1
    confidence_logits: torch.Tensor  # (N,)
    count_logits: torch.Tensor  # (count_max,), class j <-> count j+1


@dataclass
class ParagraphEncoding:
    q_sent: torch.Tensor  # (K, text_dim), context-free
    q_ctx: torch.Tensor  # (K, text_dim), context-aware


_POSITION_CACHE: dict[tuple, torch.Tensor] = {}


def sinusoidal_positions(length: int, dim: int, dtype, device) -> torch.Tensor:
    if dim % 2 != 0:
        raise ValueError("position encoding needs an even dim")
    key = (length, dim, dtype, str(device))
    cached = _POSITION_CACHE.get(key)
    if cached is not None:
        return cached
    pos = torch.arange(length, dtype=dtype, device=device).unsqueeze(1)
    freq = torch.pow(
        torch.tensor(10000.0, dtype=dtype, device=device),
        -torch.arange(0, dim, 2, dtype=dtype, device=device) / dim,
    )
    angles = pos * freq
    enc = torch.zeros(length, dim, dtype=dtype, device=device)
    enc[:, 0::2] = torch.sin(angles)
    enc[:, 1::2] = torch.cos(angles)
    _POSITION_CACHE[key] = enc
    return enc


def _encoder_stack(dim: int, heads: int, layers: int) -> nn.TransformerEncoder:
    layer = nn.TransformerEncoderLayer(
        d_model=dim, nhead=heads, dim_feedforward=4 * dim, dropout=0.0, batch_first=True
    )
    return nn.TransformerEncoder(layer, num_layers=layers, enable_nested_tensor=False)


class QueryDecoderLayer(nn.Module):
    """Post-norm decoder layer with query/memory position terms re-injected into every attention."""

    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.self_attn = nn.MultiheadAttention(dim, heads, dropout=0.0, batch_first=True)
        self.cross_attn = nn.MultiheadAttention(dim, heads, dropout=0.0, batch_first=True)
        self.ffn = nn.Sequential(nn.Linear(dim, 4 * dim), nn.ReLU(), nn.Linear(4 * dim, dim))
        self.norm1 = nn.LayerNorm(dim)
        self.norm2 = nn.LayerNorm(dim)
        self.norm3 = nn.LayerNorm(dim)

    def forward(self, x, query_pos, memory, memory_pos):
        q = k = x + query_pos
        x = self.norm1(x + self.self_attn(q, k, x, need_weights=False)[0])
        attended = self.cross_attn(
            x + query_pos, memory + memory_pos, memory, need_weights=False
        )[0]
        x = self.norm2(x + attended)
        return self.norm3(x + self.ffn(x))


class EventEncoder(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        d = config.event_dim
        self.input_proj = nn.Linear(config.feature_dim, d)
        self.encoder = _encoder_stack(d, config.num_heads, config.num_encoder_layers)
        self.queries = nn.Embedding(config.num_queries, d)
        self.decoder_layers = nn.ModuleList(
            QueryDecoderLayer(d, config.num_heads) for _ in range(config.num_decoder_layers)
        )
        self.segment_head = nn.Sequential(nn.Linear(d, d), nn.ReLU(), nn.Linear(d, 2))
        self.confidence_head = nn.Linear(d, 1)
        self.count_head = nn.Linear(d, config.count_max)
        # Per-query (center, width) reference added to the head output before the
        # squash: centers spread across the timeline so queries specialize by
        # position from the first step, widths start around 0.18, confidence
        # leans background. The head's final weight stays small but nonzero so
        # segments respond to the input immediately.
        centers = torch.linspace(0.05, 0.95, config.num_queries)
        self.segment_reference = nn.Parameter(
            torch.stack([torch.logit(centers), torch.full_like(centers, -1.5)], dim=1)
        )
        nn.init.normal_(self.segment_head[-1].weight, std=0.01)
        nn.init.zeros_(self.segment_head[-1].bias)
        with torch.no_grad():
            self.confidence_head.bias.fill_(-2.0)

    def forward(self, features) -> EventSet:
        p = self.input_proj.weight
        if isinstance(features, np.ndarray):
            features = torch.as_tensor(features)
        features = features.to(dtype=p.dtype, device=p.device)
        if features.dim() != 2:
            raise ValueError(f"features must be (T, D), got shape {tuple(features.shape)}")
        t, d_in = features.shape
        if t == 0:
            raise ValueError("video has no frames")
        if d_in != self.config.feature_dim:
            raise ValueError(f"feature dim {d_in} != configured {self.config.feature_dim}")

        positions = sinusoidal_positions(t, self.config.event_dim, p.dtype, p.device)
        # content scaled by sqrt(d) so the position term does not drown it
        content = self.input_proj(features) * math.sqrt(self.config.event_dim)
        memory = self.encoder((content + positions).unsqueeze(0))
        query_pos = self.queries.weight.unsqueeze(0)
        hidden = torch.zeros_like(query_pos)
        for layer in self.decoder_layers:
            hidden = layer(hidden, query_pos, memory, positions.unsqueeze(0))
        hidden = hidden.squeeze(0)  # (N, d)

        raw = self.segment_head(hidden) + self.segment_reference
        center = torch.sigmoid(raw[:, 0])
        width = torch.sigmoid(raw[:, 1])
        min_w = 1.0 / t
        start = (center - width / 2).clamp(0.0, 1.0 - min_w)
        end = torch.minimum(
            torch.maximum(center + width / 2, start + min_w), torch.ones_like(start)
        )
        return EventSet(
            embeddings=hidden,
            segments=torch.stack([start, end], dim=1),
            confidence_logits=self.confidence_head(hidden).squeeze(-1),
            count_logits=self.count_head(hidden.mean(dim=0)),
        )


class AttentionPool(nn.Module):
    """Single learned-query attention over token outputs -> one vector."""

    def __init__(self, dim: int):
        super().__init__()
        self.query = nn.Parameter(torch.randn(dim) / math.sqrt(dim))

    def forward(self, hidden: torch.Tensor) -> torch.Tensor:
        scores = hidden @ self.query / math.sqrt(hidden.shape[-1])
        return torch.softmax(scores, dim=0) @ hidden


class TextEncoder(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        d = config.text_dim
        self.word_embedding = nn.Embedding(config.vocab_size, d)
        self.word_encoder = _encoder_stack(d, config.num_heads, config.num_encoder_layers)
        self.pool = AttentionPool(d)
        # One slot per event query; K <= num_queries is an invariant of the corpus.
        self.sentence_positions = nn.Embedding(config.num_queries, d)
        self.context_layer = nn.TransformerEncoderLayer(
            d_model=2 * d,
            nhead=config.num_heads,
            dim_feedforward=4 * d,
            dropout=0.0,
            batch_first=True,
        )
        self.context_out = nn.Linear(2 * d, d)

    def encode_sentence(self, tokens) -> torch.Tensor:
        p = self.word_embedding.weight
        idx = torch.as_tensor(tokens, dtype=torch.long, device=p.device)
        if idx.dim() != 1 or idx.numel() == 0:
            raise ValueError("sentence must be a non-empty token sequence")
        if int(idx.max()) >= self.config.vocab_size or int(idx.min()) < 0:
            raise ValueError("token id outside the vocabulary")
        emb = self.word_embedding(idx) + sinusoidal_positions(
            idx.numel(), self.config.text_dim, p.dtype, p.device
        )
        hidden = self.word_encoder(emb.unsqueeze(0)).squeeze(0)
        return self.pool(hidden)

    def forward(self, sentences) -> ParagraphEncoding:
        if len(sentences) == 0:
            raise ValueError("paragraph must contain at least one sentence")
        if len(sentences) > self.config.num_queries:
            raise ValueError(
                f"{len(sentences)} sentences exceed the {self.config.num_queries} position slots"
            )
        q_sent = torch.stack([self.encode_sentence(s) for s in sentences])
        k = q_sent.shape[0]
        pos = self.sentence_positions.weight[:k]
        ctx_in = torch.cat([q_sent, pos], dim=-1).unsqueeze(0)
        q_ctx = self.context_out(self.context_layer(ctx_in).squeeze(0))
        return ParagraphEncoding(q_sent=q_sent, q_ctx=q_ctx)
