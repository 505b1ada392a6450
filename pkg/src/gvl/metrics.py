"""Grounding, captioning and label-assignment metrics on the synthetic corpus.

Caption quality is scored with corpus-native token metrics (token F1, archetype
verb accuracy, exact match) instead of external caption metrics: the synthetic
captions are deterministic templates, so exact comparisons are meaningful.
IoU@t thresholds are inclusive (>= t).
"""

from __future__ import annotations

from collections import Counter
from dataclasses import asdict, dataclass

import numpy as np
import torch

from .datagen import VideoSample
from .etg import pairwise_iou, temporal_iou
from .inference import DvcItem
from .matcher import hungarian
from .vocab import verb_token


@dataclass
class MetricReport:
    """All fields lie in [0, 1]; None marks a block that was not evaluated."""

    iou_at_0_5: float | None = None
    iou_at_0_7: float | None = None
    miou: float | None = None
    token_f1: float | None = None
    verb_accuracy: float | None = None
    caption_exact_match: float | None = None
    matching_accuracy: float | None = None

    def as_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


def eval_grounding(preds, gts) -> MetricReport:
    """IoU@0.5, IoU@0.7 (inclusive) and mean IoU over aligned (pred, gt) segment lists."""
    if len(preds) != len(gts):
        raise ValueError(f"{len(preds)} predictions vs {len(gts)} ground truths")
    if len(preds) == 0:
        raise ValueError("empty grounding evaluation")
    ious = np.array([temporal_iou(tuple(p), tuple(g)) for p, g in zip(preds, gts)])
    return MetricReport(
        iou_at_0_5=float(np.mean(ious >= 0.5)),
        iou_at_0_7=float(np.mean(ious >= 0.7)),
        miou=float(ious.mean()),
    )


def token_f1(pred_tokens, gt_tokens) -> float:
    """Multiset F1 between two token sequences."""
    if len(pred_tokens) == 0 and len(gt_tokens) == 0:
        return 1.0
    if len(pred_tokens) == 0 or len(gt_tokens) == 0:
        return 0.0
    overlap = sum((Counter(pred_tokens) & Counter(gt_tokens)).values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(pred_tokens)
    recall = overlap / len(gt_tokens)
    return 2 * precision * recall / (precision + recall)


def caption_metrics(items: list[DvcItem], video: VideoSample) -> MetricReport:
    """Score dense-caption output against a video's annotations.

    Predictions are aligned to ground-truth events by maximum-IoU one-to-one
    matching; unmatched ground-truth events count as failures. Exact match
    additionally requires the aligned segments to overlap with IoU >= 0.5.
    """
    gts = video.annotations
    if not gts:
        raise ValueError("video has no annotations")
    if not items:
        return MetricReport(token_f1=0.0, verb_accuracy=0.0, caption_exact_match=0.0)
    iou = pairwise_iou(
        torch.tensor([item.segment for item in items], dtype=torch.float64),
        torch.tensor([ann.segment for ann in gts], dtype=torch.float64),
    ).numpy()
    k, m = iou.shape
    # hungarian needs rows <= columns; flip orientation when predictions are scarce
    if k <= m:
        pairs = hungarian(-iou).pairs
    else:
        pairs = tuple((gk, pi) for pi, gk in hungarian(-iou.T).pairs)

    f1_total = 0.0
    verbs = 0
    exact = 0
    for gk, pi in pairs:
        ann, item = gts[gk], items[pi]
        f1_total += token_f1(item.tokens, ann.tokens)
        if verb_token(ann.archetype_id) in item.tokens:
            verbs += 1
        if iou[gk, pi] >= 0.5 and tuple(item.tokens) == tuple(ann.tokens):
            exact += 1
    return MetricReport(
        token_f1=f1_total / k,
        verb_accuracy=verbs / k,
        caption_exact_match=exact / k,
    )


def aggregate_caption_metrics(per_video: list[MetricReport]) -> MetricReport:
    if not per_video:
        raise ValueError("nothing to aggregate")
    return MetricReport(
        token_f1=float(np.mean([r.token_f1 for r in per_video])),
        verb_accuracy=float(np.mean([r.verb_accuracy for r in per_video])),
        caption_exact_match=float(np.mean([r.caption_exact_match for r in per_video])),
    )


def random_proposal_baseline(videos: list[VideoSample], seed: int = 0) -> float:
    """mIoU of uniformly random proposals against the annotations.

    For every annotated sentence a segment is drawn by sorting two U(0, 1)
    samples; this is the no-model reference level the trained numbers are
    compared against.
    """
    rng = np.random.default_rng(seed)
    ious = []
    for video in videos:
        for ann in video.annotations:
            a, b = np.sort(rng.uniform(0.0, 1.0, size=2))
            if b - a < 1e-6:
                b = min(1.0, a + 1e-6)
            ious.append(temporal_iou((float(a), float(b)), ann.segment))
    return float(np.mean(ious))
