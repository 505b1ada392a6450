"""Event-to-text generation: caption decoding plus the localization-side losses.

The decoder is a single-layer LSTM conditioned on the event embedding twice:
as its initial state and concatenated to the word embedding at every step.
Training uses teacher forcing; inference decodes greedily.

The boundary loss is a 1-d generalized IoU (nonzero gradient even for disjoint
segments); plain IoU is available behind a flag for ablation. Per a standard
detection-transformer weighting, the boundary term is weighted 2 and the
confidence cross-entropy 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .vocab import BOS_TOKEN, EOS_TOKEN

BOUNDARY_LOSS_WEIGHT = 2.0
CONFIDENCE_LOSS_WEIGHT = 1.0


@dataclass
class CaptionOutput:
    """Greedy decode result: content tokens (end token excluded) and the logits of every executed step."""

    tokens: tuple[int, ...]
    step_logits: torch.Tensor  # (L, V)
    terminated: bool


def _pairs(assignment):
    return list(getattr(assignment, "pairs", assignment))


# --- temporal overlap -------------------------------------------------------


def _split(seg):
    t = seg if torch.is_tensor(seg) else torch.as_tensor(seg, dtype=torch.float64)
    return t[..., 0], t[..., 1], torch.is_tensor(seg)


def temporal_iou(a, b):
    """Intersection over union of two segments (elementwise over leading dims)."""
    a_s, a_e, a_t = _split(a)
    b_s, b_e, b_t = _split(b)
    inter = (torch.minimum(a_e, b_e) - torch.maximum(a_s, b_s)).clamp(min=0)
    union = (a_e - a_s) + (b_e - b_s) - inter
    out = inter / union
    return out if (a_t or b_t) else out.item() if out.dim() == 0 else out


def giou(a, b):
    """Generalized IoU for segments: IoU minus the hull gap fraction, in (-1, 1]."""
    a_s, a_e, a_t = _split(a)
    b_s, b_e, b_t = _split(b)
    inter = (torch.minimum(a_e, b_e) - torch.maximum(a_s, b_s)).clamp(min=0)
    union = (a_e - a_s) + (b_e - b_s) - inter
    hull = torch.maximum(a_e, b_e) - torch.minimum(a_s, b_s)
    out = inter / union - (hull - union) / hull
    return out if (a_t or b_t) else out.item() if out.dim() == 0 else out


def pairwise_iou(pred: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    """(K, N) IoU matrix between gt (K, 2) and predicted (N, 2) segments."""
    return temporal_iou(pred[None, :, :], gt[:, None, :])


def pairwise_giou(pred: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    """(K, N) generalized-IoU matrix between gt (K, 2) and predicted (N, 2) segments."""
    return giou(pred[None, :, :], gt[:, None, :])


# --- losses ------------------------------------------------------------------


def caption_ce_loss(step_logits: torch.Tensor, target_tokens) -> torch.Tensor:
    """Mean token-level cross-entropy of teacher-forced logits against the target sequence."""
    targets = torch.as_tensor(target_tokens, dtype=torch.long, device=step_logits.device)
    if step_logits.dim() != 2 or step_logits.shape[0] != targets.shape[0]:
        raise ValueError(
            f"step_logits {tuple(step_logits.shape)} not aligned with {targets.shape[0]} targets"
        )
    return F.cross_entropy(step_logits, targets)


def localization_loss(event_set, assignment, gt_segments, use_plain_iou: bool = False):
    """Boundary + confidence loss over a one-to-one assignment.

    2 * mean(1 - gIoU) over matched (proposal, gt) pairs, plus binary
    cross-entropy over all confidence logits with matched proposals labeled 1.
    """
    pairs = _pairs(assignment)
    segments = event_set.segments
    conf = event_set.confidence_logits
    gt = torch.as_tensor(gt_segments, dtype=segments.dtype, device=segments.device)
    rows = [k for k, _ in pairs]
    cols = [i for _, i in pairs]
    overlap_fn = temporal_iou if use_plain_iou else giou
    overlap = overlap_fn(segments[cols], gt[rows])
    labels = torch.zeros_like(conf)
    labels[cols] = 1.0
    bce = F.binary_cross_entropy_with_logits(conf, labels)
    return BOUNDARY_LOSS_WEIGHT * (1.0 - overlap).mean() + CONFIDENCE_LOSS_WEIGHT * bce


def count_loss(count_logits: torch.Tensor, true_count: int) -> torch.Tensor:
    """Cross-entropy between the count distribution and the (clamped) ground-truth count."""
    support = count_logits.shape[-1]
    target = min(max(int(true_count), 1), support) - 1
    return F.cross_entropy(
        count_logits.unsqueeze(0), torch.tensor([target], device=count_logits.device)
    )


def predict_count(count_logits: torch.Tensor) -> int:
    return int(count_logits.argmax().item()) + 1


# --- caption decoder ---------------------------------------------------------


class CaptionDecoder(nn.Module):
    def __init__(self, vocab_size: int, event_dim: int, word_dim: int):
        super().__init__()
        self.vocab_size = vocab_size
        self.word_embedding = nn.Embedding(vocab_size, word_dim)
        self.init_h = nn.Linear(event_dim, event_dim)
        self.init_c = nn.Linear(event_dim, event_dim)
        self.lstm = nn.LSTM(word_dim + event_dim, event_dim, num_layers=1, batch_first=True)
        self.out = nn.Linear(event_dim, vocab_size)

    def _initial_state(self, event_embeddings: torch.Tensor):
        h = self.init_h(event_embeddings).unsqueeze(0)  # (1, M, H)
        c = self.init_c(event_embeddings).unsqueeze(0)
        return h, c

    def forced_logits(self, event_embeddings: torch.Tensor, token_seqs) -> list[torch.Tensor]:
        """Teacher-forced step logits for each (event, caption) pair.

        Inputs are [BOS] + tokens; row i of the returned (L_i + 1, V) matrix
        predicts target position i of tokens + [EOS].
        """
        if event_embeddings.dim() != 2 or event_embeddings.shape[0] != len(token_seqs):
            raise ValueError("one event embedding per token sequence required")
        if any(len(seq) == 0 for seq in token_seqs):
            raise ValueError("empty caption")
        device = event_embeddings.device
        m = len(token_seqs)
        steps = [len(seq) + 1 for seq in token_seqs]
        width = max(steps)
        inputs = torch.zeros(m, width, dtype=torch.long, device=device)
        for i, seq in enumerate(token_seqs):
            inputs[i, 0] = BOS_TOKEN
            inputs[i, 1 : len(seq) + 1] = torch.as_tensor(seq, dtype=torch.long, device=device)
        emb = self.word_embedding(inputs)
        ctx = event_embeddings.unsqueeze(1).expand(m, width, -1)
        hidden, _ = self.lstm(torch.cat([emb, ctx], dim=-1), self._initial_state(event_embeddings))
        logits = self.out(hidden)  # (M, width, V)
        return [logits[i, : steps[i]] for i in range(m)]

    @torch.no_grad()
    def decode(self, event_embedding: torch.Tensor, max_len: int) -> CaptionOutput:
        """Greedy decode conditioned on one event embedding.

        Runs at most max_len steps, stops early on the end token. The end
        token is suppressed at step 0 so the output is never empty.
        """
        if max_len < 1:
            raise ValueError("max_len must be >= 1")
        state = self._initial_state(event_embedding.unsqueeze(0))
        prev = torch.tensor([[BOS_TOKEN]], device=event_embedding.device)
        ctx = event_embedding.view(1, 1, -1)
        tokens: list[int] = []
        rows = []
        terminated = False
        for step in range(max_len):
            emb = self.word_embedding(prev)
            hidden, state = self.lstm(torch.cat([emb, ctx], dim=-1), state)
            logits = self.out(hidden[0, 0])
            rows.append(logits)
            scores = logits.clone()
            if step == 0:
                scores[EOS_TOKEN] = float("-inf")
            token = int(scores.argmax().item())
            if token == EOS_TOKEN:
                terminated = True
                break
            tokens.append(token)
            prev = torch.tensor([[token]], device=event_embedding.device)
        return CaptionOutput(
            tokens=tuple(tokens), step_logits=torch.stack(rows), terminated=terminated
        )


@torch.no_grad()
def caption_nll_matrix(
    decoder: CaptionDecoder,
    event_embeddings: torch.Tensor,
    token_seqs,
    length_normalized: bool = True,
) -> torch.Tensor:
    """(K, N) negative log-likelihood of every caption under every event.

    length_normalized=True gives mean NLL per token (the default matching
    cost); False gives the summed NLL, which reproduces the short-caption
    bias pathology and exists for ablation.
    """
    n = event_embeddings.shape[0]
    k = len(token_seqs)
    out = torch.zeros(k, n, dtype=event_embeddings.dtype, device=event_embeddings.device)
    for ki, seq in enumerate(token_seqs):
        repeated = [seq] * n
        logits = decoder.forced_logits(event_embeddings, repeated)
        targets = torch.as_tensor(
            list(seq) + [EOS_TOKEN], dtype=torch.long, device=event_embeddings.device
        )
        for ni in range(n):
            nll = F.cross_entropy(logits[ni], targets, reduction="mean" if length_normalized else "sum")
            out[ki, ni] = nll
    return out
