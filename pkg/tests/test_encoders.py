import dataclasses

import numpy as np
import pytest
import torch

from _helpers import central_difference, relative_error
from gvl.config import ModelConfig
from gvl.encoders import EventEncoder, TextEncoder, sinusoidal_positions
from gvl.model import GroundedModel, load_checkpoint, save_checkpoint


def tiny_config(**overrides):
    base = dict(
        num_queries=8,
        feature_dim=6,
        event_dim=16,
        text_dim=16,
        joint_dim=12,
        num_heads=2,
        vocab_size=30,
        count_max=5,
    )
    base.update(overrides)
    return ModelConfig(**base)


@pytest.fixture()
def event_encoder():
    torch.manual_seed(0)
    return EventEncoder(tiny_config()).eval()


@pytest.fixture()
def text_encoder():
    torch.manual_seed(1)
    return TextEncoder(tiny_config()).eval()


def random_video(t=24, d=6, seed=0):
    return np.random.default_rng(seed).normal(size=(t, d)).astype(np.float32)


# --- event tower -------------------------------------------------------------


def test_event_set_shapes_and_segment_validity(event_encoder):
    out = event_encoder(random_video())
    assert out.embeddings.shape == (8, 16)
    assert out.segments.shape == (8, 2)
    assert out.confidence_logits.shape == (8,)
    assert out.count_logits.shape == (5,)
    assert (out.segments[:, 0] >= 0).all()
    assert (out.segments[:, 1] <= 1).all()
    assert (out.segments[:, 1] - out.segments[:, 0] >= 1 / 24 - 1e-6).all()


def test_segments_valid_for_arbitrary_weights():
    # validity must come from the parametrization, not from training
    for seed in range(10):
        torch.manual_seed(seed)
        enc = EventEncoder(tiny_config()).eval()
        with torch.no_grad():
            for p in enc.segment_head.parameters():
                p.mul_(50.0)  # push the head into saturation
        out = enc(random_video(seed=seed))
        assert (out.segments[:, 0] >= 0).all()
        assert (out.segments[:, 1] <= 1).all()
        assert (out.segments[:, 1] > out.segments[:, 0]).all()


def test_event_encoding_deterministic(event_encoder):
    video = random_video(seed=5)
    a = event_encoder(video)
    b = event_encoder(video)
    assert torch.equal(a.embeddings, b.embeddings)
    assert torch.equal(a.segments, b.segments)


def test_frame_order_changes_output(event_encoder):
    # a two-event video and its temporal reversal must encode differently
    video = np.zeros((24, 6), dtype=np.float32)
    video[2:6] = 1.0
    video[14:22] = -1.0
    fwd = event_encoder(video)
    rev = event_encoder(video[::-1].copy())
    assert not torch.allclose(fwd.segments, rev.segments, atol=1e-5)


def test_event_encoder_input_validation(event_encoder):
    with pytest.raises(ValueError):
        event_encoder(np.zeros((0, 6), dtype=np.float32))
    with pytest.raises(ValueError):
        event_encoder(np.zeros((10, 7), dtype=np.float32))
    with pytest.raises(ValueError):
        event_encoder(np.zeros(10, dtype=np.float32))


def test_sinusoidal_positions_shape():
    enc = sinusoidal_positions(10, 8, torch.float32, "cpu")
    assert enc.shape == (10, 8)
    assert torch.isfinite(enc).all()
    with pytest.raises(ValueError):
        sinusoidal_positions(10, 7, torch.float32, "cpu")


# --- text tower --------------------------------------------------------------


def test_paragraph_rows_match_sentences(text_encoder):
    out = text_encoder([[2, 3, 4], [5, 6], [7, 8, 9, 10]])
    assert out.q_sent.shape == (3, 16)
    assert out.q_ctx.shape == (3, 16)


def test_q_sent_permutation_equivariant_exactly(text_encoder):
    sentences = [[2, 3, 4], [5, 6], [7, 8, 9, 10]]
    perm = [2, 0, 1]
    base = text_encoder(sentences)
    permuted = text_encoder([sentences[i] for i in perm])
    assert torch.equal(permuted.q_sent, base.q_sent[perm])


def test_q_ctx_is_order_sensitive(text_encoder):
    sentences = [[2, 3, 4], [5, 6], [7, 8, 9, 10]]
    base = text_encoder(sentences)
    reversed_out = text_encoder(sentences[::-1])
    # reversing the paragraph must NOT merely reverse the context-aware rows
    assert not torch.allclose(reversed_out.q_ctx, base.q_ctx.flip(0), atol=1e-5)


def test_text_encoder_input_validation(text_encoder):
    with pytest.raises(ValueError):
        text_encoder([])
    with pytest.raises(ValueError):
        text_encoder([[2, 3], []])
    with pytest.raises(ValueError):
        text_encoder([[2, 30]])  # vocab_size is 30
    with pytest.raises(ValueError):
        text_encoder([[2]] * 9)  # more sentences than position slots


# --- head differentiability --------------------------------------------------


def _probe_checks(make_scalar, model, n_params=3):
    params = [p for p in model.parameters() if p.requires_grad and p.numel() > 1]
    rng = np.random.default_rng(0)
    picked = [params[i] for i in rng.choice(len(params), size=n_params, replace=False)]
    loss = make_scalar()
    grads = torch.autograd.grad(loss, picked, allow_unused=True)
    for param, grad in zip(picked, grads):
        if grad is None:
            continue
        idx = int(rng.integers(param.numel()))
        fd = central_difference(make_scalar, param, idx)
        analytic = grad.view(-1)[idx].item()
        if abs(analytic) < 1e-10 and abs(fd) < 1e-7:
            continue
        assert relative_error(analytic, fd) < 1e-4


def test_event_heads_gradients_match_finite_differences():
    torch.manual_seed(3)
    enc = EventEncoder(tiny_config()).double()
    video = torch.tensor(random_video(seed=3), dtype=torch.float64)
    probes = {
        "segments": torch.randn(8, 2, dtype=torch.float64),
        "confidence_logits": torch.randn(8, dtype=torch.float64),
        "count_logits": torch.randn(5, dtype=torch.float64),
        "embeddings": torch.randn(8, 16, dtype=torch.float64),
    }
    for field, probe in probes.items():
        _probe_checks(lambda: (getattr(enc(video), field) * probe).sum(), enc)


def test_text_heads_gradients_match_finite_differences():
    torch.manual_seed(4)
    enc = TextEncoder(tiny_config()).double()
    sentences = [[2, 3, 4], [5, 6]]
    for field in ("q_sent", "q_ctx"):
        probe = torch.randn(2, 16, dtype=torch.float64)
        _probe_checks(lambda: (getattr(enc(sentences), field) * probe).sum(), enc)


# --- checkpointing -----------------------------------------------------------


def test_checkpoint_roundtrip(tmp_path):
    torch.manual_seed(7)
    model = GroundedModel(tiny_config()).eval()
    video = random_video(seed=9)
    before = model.encode_video(video)
    path = tmp_path / "model.pt"
    save_checkpoint(model, path, extra={"epoch": 3})
    loaded, extra = load_checkpoint(path)
    assert extra == {"epoch": 3}
    after = loaded.encode_video(video)
    assert torch.equal(before.segments, after.segments)
    assert torch.equal(before.embeddings, after.embeddings)


def test_checkpoint_config_mismatch_rejected(tmp_path):
    model = GroundedModel(tiny_config())
    path = tmp_path / "model.pt"
    save_checkpoint(model, path)
    other = dataclasses.replace(tiny_config(), num_queries=9)
    with pytest.raises(ValueError, match="config"):
        load_checkpoint(path, expected_config=other)
    loaded, _ = load_checkpoint(path, expected_config=tiny_config())
    assert loaded.config == tiny_config()
