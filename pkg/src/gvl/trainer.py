"""Training loop: assignment-coupled total objective, optimizer, checkpoints, logging.

Per video, proposals are matched to ground-truth sentences with the
semantic-aware cost, then the generation-side losses (caption cross-entropy,
boundary + confidence, event count) and the grounding contrastive losses (both
sentence flavors) are combined as

    total = ce + localization + count + teg_weight * (teg_sent + teg_ctx)

Matching is recomputed at every forward pass. Training is deterministic given
the seed in single-worker mode.
"""

from __future__ import annotations

import copy
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .config import ModelConfig, TrainConfig
from .datagen import Corpus, VideoSample
from .etg import caption_ce_loss, caption_nll_matrix, count_loss, localization_loss
from .inference import ground_multi
from .matcher import Assignment, build_cost, hungarian
from .metrics import eval_grounding
from .model import GroundedModel, ModelOutputs, save_checkpoint
from .teg import teg_loss
from .vocab import EOS_TOKEN


class TrainingDivergedError(RuntimeError):
    """Raised when the loss stops being finite; carries a diagnostic breakdown."""


@dataclass
class EpochRecord:
    epoch: int
    total: float
    teg_sent: float
    teg_ctx: float
    ce: float
    loc: float
    count: float
    val_miou: float
    wall_time: float


@dataclass
class TrainReport:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = -1
    best_val_miou: float = float("-inf")
    wall_time: float = 0.0

    def write_jsonl(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            for record in self.records:
                fh.write(json.dumps(asdict(record)) + "\n")


def total_loss(
    model: GroundedModel,
    outputs: ModelOutputs,
    annotations,
    config: ModelConfig,
    cost_mode: str = "contrastive",
    disable_teg: bool = False,
    disable_captioner: bool = False,
) -> tuple[torch.Tensor, dict, Assignment]:
    """The per-video objective over the Hungarian assignment, with its breakdown."""
    if not annotations:
        raise ValueError("video has no annotations")
    event_set = outputs.event_set
    gt_segments = [list(ann.segment) for ann in annotations]
    sentences = [ann.tokens for ann in annotations]

    caption_nll = None
    if cost_mode == "caption":
        caption_nll = caption_nll_matrix(model.caption_decoder, event_set.embeddings, sentences)
    if cost_mode == "contrastive" and outputs.omega_ctx is None:
        raise ValueError("contrastive cost needs text-tower outputs")
    omega_for_cost = outputs.omega_ctx if cost_mode == "contrastive" else None
    cost = build_cost(
        omega_for_cost,
        event_set,
        gt_segments,
        ratio=config.semantic_cost_ratio,
        mode=cost_mode,
        caption_nll=caption_nll,
    )
    assignment = hungarian(cost)

    zero = event_set.embeddings.sum() * 0.0
    if disable_teg:
        sent_loss = ctx_loss = zero
    else:
        sent_loss = teg_loss(outputs.omega_sent, assignment, config.temperature)
        ctx_loss = teg_loss(outputs.omega_ctx, assignment, config.temperature)

    if disable_captioner:
        ce = zero
    else:
        matched_embeddings = event_set.embeddings[[i for _, i in assignment.pairs]]
        matched_tokens = [sentences[k] for k, _ in assignment.pairs]
        step_logits = model.caption_decoder.forced_logits(matched_embeddings, matched_tokens)
        ce = torch.stack(
            [
                caption_ce_loss(logits, list(tokens) + [EOS_TOKEN])
                for logits, tokens in zip(step_logits, matched_tokens)
            ]
        ).mean()

    loc = localization_loss(event_set, assignment, gt_segments)
    cnt = count_loss(event_set.count_logits, len(annotations))
    total = ce + loc + cnt + config.teg_weight * (sent_loss + ctx_loss)
    breakdown = {
        "total": float(total.detach()),
        "teg_sent": float(sent_loss.detach()),
        "teg_ctx": float(ctx_loss.detach()),
        "ce": float(ce.detach()),
        "loc": float(loc.detach()),
        "count": float(cnt.detach()),
    }
    return total, breakdown, assignment


def _trainable_parameters(model: GroundedModel, cfg: TrainConfig):
    frozen = []
    if cfg.freeze_text_encoder or cfg.disable_teg:
        frozen.append(model.text_encoder)
    if cfg.disable_teg:
        frozen.append(model.joint_space)
    if cfg.disable_captioner:
        frozen.append(model.caption_decoder)
    frozen_ids = {id(p) for module in frozen for p in module.parameters()}
    for module in frozen:
        for p in module.parameters():
            p.requires_grad_(False)
    return [p for p in model.parameters() if id(p) not in frozen_ids]


def validation_miou(model: GroundedModel, videos: list[VideoSample]) -> float:
    """Paragraph-grounding mIoU (one-to-one strategy) against annotation segments."""
    preds, gts = [], []
    was_training = model.training
    model.eval()
    for video in videos:
        result = ground_multi([a.tokens for a in video.annotations], video.features, model)
        preds.extend(result.segments)
        gts.extend([a.segment for a in video.annotations])
    if was_training:
        model.train()
    return eval_grounding(preds, gts).miou


def train(
    corpus: Corpus,
    model: GroundedModel,
    cfg: TrainConfig,
    out_dir: str | Path | None = None,
    match_debug_path: str | Path | None = None,
) -> TrainReport:
    """Optimize the model on corpus.train, tracking the best validation mIoU.

    Writes checkpoint.pt (best epoch) and train_log.jsonl under out_dir when
    given. match_debug_path enables a per-step JSONL dump of the cost matrix
    and the chosen assignment.
    """
    cfg.validate()
    if not corpus.train:
        raise ValueError("corpus has no training videos")
    val_videos = corpus.val if corpus.val else corpus.train[: max(1, len(corpus.train) // 10)]
    max_k = max(len(v.annotations) for v in corpus.train + val_videos)
    if max_k > model.config.num_queries:
        raise ValueError(
            f"corpus has videos with {max_k} events but the model only has "
            f"{model.config.num_queries} queries"
        )

    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    params = _trainable_parameters(model, cfg)
    optimizer = torch.optim.AdamW(
        params, lr=cfg.learning_rate, weight_decay=cfg.weight_decay, foreach=True
    )
    # learning_rate is the peak; cosine-decay it to 5% over the run
    scheduler = torch.optim.lr_scheduler.CosineAnnealingLR(
        optimizer, T_max=cfg.epochs, eta_min=0.05 * cfg.learning_rate
    )
    cost_mode = "none" if cfg.disable_teg and cfg.cost_mode == "contrastive" else cfg.cost_mode

    report = TrainReport()
    best_state = None
    stale_epochs = 0
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
    if match_debug_path is not None:
        Path(match_debug_path).parent.mkdir(parents=True, exist_ok=True)
    debug_fh = open(match_debug_path, "w") if match_debug_path else None
    start_all = time.perf_counter()
    try:
        for epoch in range(cfg.epochs):
            start = time.perf_counter()
            model.train()
            order = rng.permutation(len(corpus.train))
            sums = {"total": 0.0, "teg_sent": 0.0, "teg_ctx": 0.0, "ce": 0.0, "loc": 0.0, "count": 0.0}
            optimizer.zero_grad()
            for step, video_idx in enumerate(order):
                video = corpus.train[video_idx]
                outputs = model.forward_video(
                    video.features,
                    None if cfg.disable_teg else [a.tokens for a in video.annotations],
                )
                if not (
                    torch.isfinite(outputs.event_set.segments).all()
                    and torch.isfinite(outputs.event_set.confidence_logits).all()
                    and torch.isfinite(outputs.event_set.embeddings).all()
                ):
                    raise TrainingDivergedError(
                        f"non-finite event outputs at epoch {epoch}, video {int(video_idx)}"
                    )
                loss, parts, assignment = total_loss(
                    model,
                    outputs,
                    video.annotations,
                    model.config,
                    cost_mode=cost_mode,
                    disable_teg=cfg.disable_teg,
                    disable_captioner=cfg.disable_captioner,
                )
                if not np.isfinite(parts["total"]):
                    raise TrainingDivergedError(
                        f"non-finite loss at epoch {epoch}, video {int(video_idx)}: {parts}"
                    )
                (loss / cfg.batch_size).backward()
                if (step + 1) % cfg.batch_size == 0 or step + 1 == len(order):
                    torch.nn.utils.clip_grad_norm_(params, cfg.clip_norm)
                    optimizer.step()
                    optimizer.zero_grad()
                for key in sums:
                    sums[key] += parts[key]
                if debug_fh is not None:
                    debug_fh.write(
                        json.dumps(
                            {
                                "epoch": epoch,
                                "video": int(video_idx),
                                "pairs": list(assignment.pairs),
                                "total_cost": assignment.total_cost,
                            }
                        )
                        + "\n"
                    )

            scheduler.step()
            val_miou = validation_miou(model, val_videos)
            record = EpochRecord(
                epoch=epoch,
                **{k: v / len(order) for k, v in sums.items()},
                val_miou=val_miou,
                wall_time=time.perf_counter() - start,
            )
            report.records.append(record)
            if val_miou > report.best_val_miou:
                report.best_val_miou = val_miou
                report.best_epoch = epoch
                best_state = copy.deepcopy(model.state_dict())
                stale_epochs = 0
            else:
                stale_epochs += 1
            if stale_epochs > cfg.early_stop_patience:
                break
    finally:
        if debug_fh is not None:
            debug_fh.close()
    report.wall_time = time.perf_counter() - start_all

    if best_state is not None:
        model.load_state_dict(best_state)
    model.eval()
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        save_checkpoint(
            model,
            out_dir / "checkpoint.pt",
            extra={"best_epoch": report.best_epoch, "best_val_miou": report.best_val_miou},
        )
        report.write_jsonl(out_dir / "train_log.jsonl")
    return report
