"""Synthetic untrimmed-video corpus generator.

Each video is a (T, D) frame-feature matrix on a normalized [0, 1] timeline
(frame i covers [i/T, (i+1)/T), center time (i + 0.5)/T). Every event plants a
fixed random unit vector (its archetype pattern) on top of Gaussian background
noise across the frames of its true segment, and carries a short template
caption [subject, verb(archetype), ordinal, fillers...] so captions of
different events in one video always differ. Boundary annotations can be
jittered with Gaussian noise to emulate ambiguous human annotations; the
unjittered segment is kept alongside.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import vocab
from .config import GenConfig


@dataclass(frozen=True)
class EventAnnotation:
    """One ground-truth event: annotated segment, caption tokens, generator metadata."""

    segment: tuple[float, float]
    tokens: tuple[int, ...]
    archetype_id: int
    true_segment: tuple[float, float]


@dataclass
class VideoSample:
    features: np.ndarray  # (T, D) float32
    annotations: list[EventAnnotation]
    duration: float = 1.0


@dataclass
class Corpus:
    train: list[VideoSample]
    val: list[VideoSample]
    test: list[VideoSample]
    config: GenConfig

    @property
    def splits(self) -> dict[str, list[VideoSample]]:
        return {"train": self.train, "val": self.val, "test": self.test}


def archetype_bank(config: GenConfig) -> np.ndarray:
    """The (A, D) matrix of fixed random unit vectors, one per archetype."""
    rng = np.random.default_rng(np.random.SeedSequence(entropy=config.seed, spawn_key=(0,)))
    vecs = rng.normal(size=(config.num_archetypes, config.feature_dim))
    return vecs / np.linalg.norm(vecs, axis=1, keepdims=True)


def make_caption(config: GenConfig, archetype_id: int, position: int) -> tuple[int, ...]:
    """Deterministic caption template for an event: pure function of (archetype, position)."""
    lo, hi = config.caption_len_range
    length = lo + (archetype_id * 3 + position) % (hi - lo + 1)
    tokens = [
        vocab.SUBJECT_TOKEN,
        vocab.verb_token(archetype_id),
        vocab.ordinal_token(config.num_archetypes, position),
    ]
    filler_base = vocab.filler_token_base(
        config.num_archetypes, config.events_per_video_range[1]
    )
    n_filler = config.vocab_size - filler_base
    for slot in range(length - 3):
        tokens.append(filler_base + (archetype_id * 5 + position * 2 + slot) % n_filler)
    return tuple(tokens)


def jitter_boundaries(
    annotations: list[EventAnnotation],
    sigma: float,
    seed: int | np.random.Generator,
    min_width: float = 1e-3,
) -> list[EventAnnotation]:
    """Perturb each segment boundary with N(0, sigma^2) noise, clamped back to a valid segment.

    Start and end are perturbed independently, re-ordered, and clamped so that
    0 <= start < end <= 1 with at least min_width between them (the generator
    passes one frame, 1/T). true_segment is untouched. sigma == 0 returns the
    annotations unchanged.
    """
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if not 0 < min_width < 1:
        raise ValueError("min_width must be in (0, 1)")
    if sigma == 0:
        return list(annotations)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    out = []
    for ann in annotations:
        s, e = ann.segment
        noise = rng.normal(0.0, sigma, size=2)
        lo, hi = sorted((s + noise[0], e + noise[1]))
        lo = float(np.clip(lo, 0.0, 1.0 - min_width))
        hi = float(np.clip(hi, lo + min_width, 1.0))
        out.append(dataclasses.replace(ann, segment=(lo, hi)))
    return out


def _video_rng(config: GenConfig, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=config.seed, spawn_key=(1, index)))


def generate_video(config: GenConfig, index: int, bank: np.ndarray | None = None) -> VideoSample:
    """Generate video `index` of the corpus; deterministic in (config, index)."""
    if bank is None:
        bank = archetype_bank(config)
    rng = _video_rng(config, index)
    T, D = config.frames_per_video, config.feature_dim
    lo, hi = config.events_per_video_range
    n_events = int(rng.integers(lo, hi + 1))

    lengths = rng.integers(config.min_event_frames, config.max_event_frames + 1, size=n_events)
    slack = T - int(lengths.sum())
    gaps = rng.multinomial(slack, np.full(n_events + 1, 1.0 / (n_events + 1)))

    features = (
        rng.normal(0.0, config.background_noise_std, size=(T, D))
        if config.background_noise_std > 0
        else np.zeros((T, D))
    )
    annotations = []
    cursor = 0
    for j in range(n_events):
        cursor += int(gaps[j])
        start_f, end_f = cursor, cursor + int(lengths[j])
        cursor = end_f
        arch = int(rng.integers(0, config.num_archetypes))
        features[start_f:end_f] += bank[arch]
        seg = (start_f / T, end_f / T)
        annotations.append(
            EventAnnotation(
                segment=seg,
                tokens=make_caption(config, arch, j),
                archetype_id=arch,
                true_segment=seg,
            )
        )
    annotations = jitter_boundaries(
        annotations, config.boundary_jitter_std, rng, min_width=1.0 / T
    )
    annotations.sort(key=lambda a: a.segment)
    return VideoSample(features=features.astype(np.float32), annotations=annotations)


def generate_corpus(config: GenConfig) -> Corpus:
    """Generate the full corpus and split it 80/10/10 by video index."""
    config.validate()
    bank = archetype_bank(config)
    videos = [generate_video(config, i, bank) for i in range(config.num_videos)]
    n = config.num_videos
    n_train = int(0.8 * n)
    n_val = int(0.1 * n)
    return Corpus(
        train=videos[:n_train],
        val=videos[n_train : n_train + n_val],
        test=videos[n_train + n_val :],
        config=config,
    )


# --- serialization: one self-describing .npz per split ---------------------


def save_split(videos: list[VideoSample], config: GenConfig, path: str | Path) -> None:
    n_events = [len(v.annotations) for v in videos]
    anns = [a for v in videos for a in v.annotations]
    token_lens = [len(a.tokens) for a in anns]
    np.savez_compressed(
        path,
        features=np.stack([v.features for v in videos]) if videos else np.zeros((0, 0, 0), np.float32),
        event_offsets=np.cumsum([0] + n_events).astype(np.int64),
        segments=np.array([a.segment for a in anns], dtype=np.float64).reshape(len(anns), 2),
        true_segments=np.array([a.true_segment for a in anns], dtype=np.float64).reshape(len(anns), 2),
        archetypes=np.array([a.archetype_id for a in anns], dtype=np.int64),
        token_offsets=np.cumsum([0] + token_lens).astype(np.int64),
        tokens=np.array([t for a in anns for t in a.tokens], dtype=np.int64),
        config_json=np.str_(json.dumps(dataclasses.asdict(config))),
    )


def load_split(path: str | Path) -> tuple[list[VideoSample], GenConfig]:
    with np.load(path, allow_pickle=False) as data:
        raw = json.loads(str(data["config_json"]))
        for key in ("events_per_video_range", "caption_len_range"):
            raw[key] = tuple(raw[key])
        config = GenConfig(**raw)
        videos = []
        ev_off = data["event_offsets"]
        tok_off = data["token_offsets"]
        for i in range(len(ev_off) - 1):
            annotations = []
            for j in range(int(ev_off[i]), int(ev_off[i + 1])):
                annotations.append(
                    EventAnnotation(
                        segment=tuple(data["segments"][j]),
                        tokens=tuple(int(t) for t in data["tokens"][tok_off[j] : tok_off[j + 1]]),
                        archetype_id=int(data["archetypes"][j]),
                        true_segment=tuple(data["true_segments"][j]),
                    )
                )
            videos.append(VideoSample(features=data["features"][i].copy(), annotations=annotations))
    return videos, config


def save_corpus(corpus: Corpus, out_dir: str | Path) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {}
    for name, videos in corpus.splits.items():
        paths[name] = out_dir / f"{name}.npz"
        save_split(videos, corpus.config, paths[name])
    return paths


def load_corpus(in_dir: str | Path) -> Corpus:
    in_dir = Path(in_dir)
    splits = {}
    config = None
    for name in ("train", "val", "test"):
        splits[name], config = load_split(in_dir / f"{name}.npz")
    return Corpus(config=config, **splits)
