import json
import math

import numpy as np
import pytest
import torch

from _helpers import assert_gradient_close, central_difference
from gvl.config import GenConfig, ModelConfig, TrainConfig
from gvl.datagen import generate_corpus
from gvl.model import GroundedModel
from gvl.trainer import TrainingDivergedError, total_loss, train


def tiny_gen(**overrides):
    base = dict(
        num_videos=12,
        frames_per_video=32,
        feature_dim=8,
        events_per_video_range=(2, 3),
        vocab_size=40,
        caption_len_range=(3, 4),
        seed=3,
    )
    base.update(overrides)
    return GenConfig(**base)


def tiny_model_config(**overrides):
    base = dict(
        num_queries=6,
        feature_dim=8,
        event_dim=16,
        text_dim=16,
        joint_dim=12,
        num_heads=2,
        vocab_size=40,
        count_max=4,
        max_caption_len=6,
    )
    base.update(overrides)
    return ModelConfig(**base)


def make_model(seed=0, **overrides):
    torch.manual_seed(seed)
    return GroundedModel(tiny_model_config(**overrides))


@pytest.fixture()
def corpus():
    return generate_corpus(tiny_gen())


def test_total_loss_composition(corpus):
    video = corpus.train[0]
    for alpha in (0.0, 0.05, 0.5):
        model = make_model(teg_weight=alpha)
        outputs = model.forward_video(video.features, [a.tokens for a in video.annotations])
        total, parts, assignment = total_loss(model, outputs, video.annotations, model.config)
        etg_part = parts["ce"] + parts["loc"] + parts["count"]
        teg_part = parts["teg_sent"] + parts["teg_ctx"]
        assert parts["total"] == pytest.approx(etg_part + alpha * teg_part, abs=1e-5)
        if alpha == 0.0:
            assert parts["total"] == pytest.approx(etg_part, abs=1e-6)
        assert len(assignment.pairs) == len(video.annotations)


def test_total_loss_hand_arithmetic():
    # the combination rule itself: ce 1 + loc 2 + count 0.5 + 0.05 * teg 4
    assert 1.0 + 2.0 + 0.5 + 0.05 * 4.0 == pytest.approx(3.7)


def test_total_loss_gradients_match_finite_differences(corpus):
    video = corpus.train[1]
    model = make_model(seed=4).double()
    features = torch.tensor(video.features, dtype=torch.float64)
    sentences = [a.tokens for a in video.annotations]

    def scalar():
        outputs = model.forward_video(features, sentences)
        loss, _, _ = total_loss(model, outputs, video.annotations, model.config)
        return loss

    params = [p for p in model.parameters() if p.requires_grad and p.numel() > 4]
    rng = np.random.default_rng(1)
    picked = [params[i] for i in rng.choice(len(params), size=10, replace=False)]
    grads = torch.autograd.grad(scalar(), picked, allow_unused=True)
    for param, grad in zip(picked, grads):
        idx = int(rng.integers(param.numel()))
        fd = central_difference(scalar, param, idx)
        analytic = 0.0 if grad is None else grad.view(-1)[idx].item()
        assert_gradient_close(analytic, fd, rel_tol=1e-3)


def test_train_single_epoch_smoke(corpus, tmp_path):
    model = make_model()
    report = train(
        corpus,
        model,
        TrainConfig(epochs=1, learning_rate=1e-3, seed=0),
        out_dir=tmp_path,
        match_debug_path=tmp_path / "match.jsonl",
    )
    assert len(report.records) == 1
    record = report.records[0]
    assert all(
        math.isfinite(getattr(record, f))
        for f in ("total", "teg_sent", "teg_ctx", "ce", "loc", "count", "val_miou")
    )
    assert (tmp_path / "checkpoint.pt").exists()
    log_lines = (tmp_path / "train_log.jsonl").read_text().splitlines()
    assert len(log_lines) == 1
    debug_lines = (tmp_path / "match.jsonl").read_text().splitlines()
    assert len(debug_lines) == len(corpus.train)
    entry = json.loads(debug_lines[0])
    assert {"epoch", "video", "pairs", "total_cost"} <= set(entry)


def test_train_deterministic_given_seed(corpus):
    results = []
    for _ in range(2):
        model = make_model(seed=7)
        report = train(corpus, model, TrainConfig(epochs=2, learning_rate=1e-3, seed=5))
        results.append((report.records[-1].total, report.records[-1].val_miou))
    assert results[0] == results[1]


def test_train_divergence_aborts(corpus):
    model = make_model()
    with torch.no_grad():
        model.event_encoder.input_proj.weight.fill_(float("nan"))
    with pytest.raises(TrainingDivergedError, match="non-finite"):
        train(corpus, model, TrainConfig(epochs=1, learning_rate=1e-3, seed=0))


def test_loss_finite_on_zero_feature_video(corpus):
    model = make_model()
    video = corpus.train[0]
    features = np.zeros_like(video.features)
    outputs = model.forward_video(features, [a.tokens for a in video.annotations])
    _, parts, _ = total_loss(model, outputs, video.annotations, model.config)
    assert all(math.isfinite(v) for v in parts.values())


def test_freeze_text_encoder_keeps_text_parameters(corpus):
    model = make_model()
    before = [p.detach().clone() for p in model.text_encoder.parameters()]
    train(
        corpus,
        model,
        TrainConfig(epochs=1, learning_rate=1e-2, seed=0, freeze_text_encoder=True),
    )
    after = list(model.text_encoder.parameters())
    assert all(torch.equal(a, b) for a, b in zip(before, after))
    # joint projections keep training even with a frozen tower
    assert any(p.requires_grad for p in model.joint_space.parameters())


def test_disabled_branches_are_untouched(corpus):
    model = make_model()
    text_before = [p.detach().clone() for p in model.text_encoder.parameters()]
    joint_before = [p.detach().clone() for p in model.joint_space.parameters()]
    train(corpus, model, TrainConfig(epochs=1, learning_rate=1e-2, seed=0, disable_teg=True))
    assert all(torch.equal(a, b) for a, b in zip(text_before, model.text_encoder.parameters()))
    assert all(torch.equal(a, b) for a, b in zip(joint_before, model.joint_space.parameters()))

    model = make_model()
    cap_before = [p.detach().clone() for p in model.caption_decoder.parameters()]
    train(corpus, model, TrainConfig(epochs=1, learning_rate=1e-2, seed=0, disable_captioner=True))
    assert all(torch.equal(a, b) for a, b in zip(cap_before, model.caption_decoder.parameters()))


def test_too_many_events_for_queries_rejected():
    corpus = generate_corpus(tiny_gen(events_per_video_range=(4, 5)))
    model = make_model(num_queries=3)
    with pytest.raises(ValueError, match="queries"):
        train(corpus, model, TrainConfig(epochs=1, learning_rate=1e-3, seed=0))


def test_caption_cost_mode_trains(corpus):
    model = make_model()
    report = train(
        corpus, model, TrainConfig(epochs=1, learning_rate=1e-3, seed=0, cost_mode="caption")
    )
    assert math.isfinite(report.records[0].total)
