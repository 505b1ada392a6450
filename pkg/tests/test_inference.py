import numpy as np
import pytest
import torch

from gvl.config import ModelConfig
from gvl.encoders import EventSet
from gvl.inference import DvcItem, dense_caption, ground_multi, ground_single
from gvl.metrics import (
    MetricReport,
    caption_metrics,
    eval_grounding,
    random_proposal_baseline,
    token_f1,
)
from gvl.datagen import EventAnnotation, VideoSample
from gvl.teg import SimilarityMatrix


def tiny_model(num_queries=6, seed=0):
    from gvl.model import GroundedModel

    torch.manual_seed(seed)
    cfg = ModelConfig(
        num_queries=num_queries,
        feature_dim=8,
        event_dim=16,
        text_dim=16,
        joint_dim=12,
        num_heads=2,
        vocab_size=40,
        count_max=4,
        max_caption_len=6,
    )
    return GroundedModel(cfg).eval()


def video_features(seed=0, t=32, d=8):
    return np.random.default_rng(seed).normal(size=(t, d)).astype(np.float32)


# --- grounding ---------------------------------------------------------------


def test_ground_single_returns_argmax_segment():
    model = tiny_model()
    features = video_features()
    sentence = [2, 3, 4]
    with torch.no_grad():
        es = model.encode_video(features)
        para = model.encode_paragraph([sentence])
        omega = model.joint_space.similarity(es.embeddings, para.q_sent, "sent").omega
        expected = tuple(es.segments[int(omega[0].argmax())].tolist())
    assert ground_single(sentence, features, model) == expected


def test_ground_single_invariant_to_text_scale():
    model = tiny_model()
    features = video_features(seed=2)
    sentence = [5, 6, 7]
    base = ground_single(sentence, features, model)
    with torch.no_grad():
        model.joint_space.text_proj.weight.mul_(3.0)
        model.joint_space.text_proj.bias.mul_(3.0)
    assert ground_single(sentence, features, model) == base


def test_ground_single_ignores_other_sentences():
    model = tiny_model()
    features = video_features(seed=3)
    alone = ground_single([2, 3, 4], features, model)
    with_context = ground_multi([[2, 3, 4], [5, 6]], features, model, strategy="argmax")
    assert alone == ground_single([2, 3, 4], features, model)
    assert isinstance(with_context.segments[0], tuple)


def test_ground_multi_single_sentence_strategies_agree():
    model = tiny_model()
    features = video_features(seed=4)
    a = ground_multi([[2, 3]], features, model, strategy="argmax")
    h = ground_multi([[2, 3]], features, model, strategy="hungarian")
    assert a.segments == h.segments
    assert a.collisions == 0 and h.collisions == 0


def test_ground_multi_hungarian_resolves_collisions(monkeypatch):
    model = tiny_model(num_queries=2)
    features = video_features(seed=5)
    fixed = torch.tensor([[0.9, 0.8], [0.9, 0.1]])
    monkeypatch.setattr(
        model.joint_space,
        "similarity",
        lambda events, text, flavor: SimilarityMatrix(fixed[: text.shape[0]], flavor),
    )
    with torch.no_grad():
        segments = model.encode_video(features).segments
    greedy = ground_multi([[2, 3], [4, 5]], features, model, strategy="argmax")
    assert greedy.segments == [tuple(segments[0].tolist())] * 2
    assert greedy.collisions == 1
    paired = ground_multi([[2, 3], [4, 5]], features, model, strategy="hungarian")
    # total 0.8 + 0.9 beats 0.9 + 0.1
    assert paired.segments == [tuple(segments[1].tolist()), tuple(segments[0].tolist())]
    assert paired.collisions == 0


def test_ground_multi_rejects_unknown_strategy_and_oversized_paragraphs():
    model = tiny_model(num_queries=2)
    features = video_features()
    with pytest.raises(ValueError):
        ground_multi([[2, 3]], features, model, strategy="greedy")
    with pytest.raises(ValueError):
        ground_multi([[2]] * 3, features, model, strategy="hungarian")


# --- dense captioning --------------------------------------------------------


def _fake_event_set(confidences, count_class, segments=None):
    n = len(confidences)
    if segments is None:
        starts = np.linspace(0.8, 0.1, n)  # deliberately unsorted by start
        segments = [[s, s + 0.15] for s in starts]
    logits = torch.full((4,), -5.0)
    logits[count_class] = 5.0
    return EventSet(
        embeddings=torch.randn(n, 16, generator=torch.Generator().manual_seed(0)),
        segments=torch.tensor(segments, dtype=torch.float32),
        confidence_logits=torch.tensor(confidences),
        count_logits=logits,
    )


def test_dense_caption_count_one(monkeypatch):
    model = tiny_model()
    es = _fake_event_set([0.3, 2.0, -1.0, 0.0, 0.1, 0.2], count_class=0)
    monkeypatch.setattr(model, "encode_video", lambda features: es)
    out = dense_caption(video_features(), model)
    assert out.selected_count == 1
    assert len(out.items) == 1
    assert out.items[0].segment == tuple(es.segments[1].tolist())  # highest confidence
    assert 1 <= len(out.items[0].tokens) <= model.config.max_caption_len


def test_dense_caption_top_confidence_prefix(monkeypatch):
    model = tiny_model()
    conf = [0.5, 2.0, -1.0, 1.0, 0.2, -0.3]
    es = _fake_event_set(conf, count_class=2)  # predicted count 3
    monkeypatch.setattr(model, "encode_video", lambda features: es)
    out = dense_caption(video_features(), model)
    assert out.selected_count == 3
    top3 = {tuple(es.segments[i].tolist()) for i in np.argsort(conf)[::-1][:3]}
    assert {item.segment for item in out.items} == top3
    starts = [item.segment[0] for item in out.items]
    assert starts == sorted(starts)  # emitted in temporal order


# --- metrics -----------------------------------------------------------------


def test_eval_grounding_perfect():
    segs = [(0.1, 0.4), (0.5, 0.9)]
    report = eval_grounding(segs, segs)
    assert report.iou_at_0_5 == 1.0
    assert report.iou_at_0_7 == 1.0
    assert report.miou == pytest.approx(1.0)


def test_eval_grounding_inclusive_threshold():
    # IoU exactly 0.5: counts for IoU@0.5, not IoU@0.7
    report = eval_grounding([(0.0, 0.5)], [(0.25, 0.75)])
    assert report.miou == pytest.approx(1 / 3)
    assert report.iou_at_0_5 == 0.0
    preds, gts = [(0.0, 0.5)], [(0.25, 0.5)]  # IoU = 0.25 / 0.5 = 0.5
    report = eval_grounding(preds, gts)
    assert report.iou_at_0_5 == 1.0
    assert report.iou_at_0_7 == 0.0


def test_eval_grounding_rejects_mismatch():
    with pytest.raises(ValueError):
        eval_grounding([(0.1, 0.2)], [(0.1, 0.2), (0.3, 0.4)])
    with pytest.raises(ValueError):
        eval_grounding([], [])


def test_token_f1_cases():
    assert token_f1((1, 2, 3), (1, 2, 3)) == pytest.approx(1.0)
    assert token_f1((1, 2), (3, 4)) == 0.0
    assert token_f1((1, 2, 3, 4), (1, 2)) == pytest.approx(2 * (2 / 4) * 1.0 / (2 / 4 + 1.0))


def test_caption_metrics_alignment_and_exact_match():
    video = VideoSample(
        features=np.zeros((10, 4), np.float32),
        annotations=[
            EventAnnotation((0.0, 0.3), (2, 4, 11), archetype_id=1, true_segment=(0.0, 0.3)),
            EventAnnotation((0.5, 0.9), (2, 5, 12), archetype_id=2, true_segment=(0.5, 0.9)),
        ],
    )
    items = [
        DvcItem(segment=(0.0, 0.3), tokens=(2, 4, 11), confidence=0.9),  # exact
        DvcItem(segment=(0.55, 0.85), tokens=(2, 5, 19), confidence=0.8),  # verb right
    ]
    report = caption_metrics(items, video)
    assert report.caption_exact_match == pytest.approx(0.5)
    assert report.verb_accuracy == pytest.approx(1.0)
    assert 0.5 < report.token_f1 <= 1.0

    # fewer predictions than events: the unmatched event counts as a failure
    report = caption_metrics(items[:1], video)
    assert report.verb_accuracy == pytest.approx(0.5)
    assert isinstance(report, MetricReport)


def test_random_proposal_baseline_in_plausible_band():
    from gvl.config import GenConfig
    from gvl.datagen import generate_corpus

    corpus = generate_corpus(GenConfig(num_videos=40, frames_per_video=64, feature_dim=8, seed=1))
    baseline = random_proposal_baseline(corpus.test, seed=0)
    assert 0.0 < baseline < 0.45
