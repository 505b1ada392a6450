"""Semantic-aware label assignment between ground-truth sentences and event proposals.

The cost of pairing sentence k with proposal i combines a localization term
(2 * (1 - gIoU) plus (1 - sigmoid confidence)) with a semantic term scaled by
`ratio`: minus the cross-modal similarity (contrastive mode), the caption NLL
(caption mode), or nothing. Costs are detached — matching is a discrete
decision and gradients never flow through it.

`hungarian` solves the K x N rectangular assignment exactly; among co-optimal
assignments it returns the lexicographically smallest one (row by row, lowest
column index first), so results are reproducible even on degenerate costs.
`brute_force_match` is the independent exhaustive oracle.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
import torch
from scipy.optimize import linear_sum_assignment

from .etg import pairwise_giou
from .teg import SimilarityMatrix

COST_MODES = ("contrastive", "caption", "none")
_TIE_RTOL = 1e-9
_TIE_ATOL = 1e-12


@dataclass
class CostMatrix:
    total: np.ndarray  # (K, N)
    components: dict[str, np.ndarray]


@dataclass(frozen=True)
class Assignment:
    pairs: tuple[tuple[int, int], ...]  # (sentence row, proposal column), sorted by row
    total_cost: float

    def column_of(self, row: int) -> int:
        for r, c in self.pairs:
            if r == row:
                return c
        raise KeyError(row)


def build_cost(
    omega_ctx,
    event_set,
    gt_segments,
    ratio: float,
    mode: str = "contrastive",
    caption_nll: torch.Tensor | None = None,
) -> CostMatrix:
    """Assemble the K x N matching cost (detached, float64)."""
    if ratio < 0:
        raise ValueError("semantic cost ratio must be >= 0")
    if mode not in COST_MODES:
        raise ValueError(f"unknown cost mode {mode!r}, expected one of {COST_MODES}")
    with torch.no_grad():
        segments = event_set.segments.detach().double()
        conf = event_set.confidence_logits.detach().double()
        gt = torch.as_tensor(gt_segments, dtype=torch.float64)
        if gt.dim() != 2 or gt.shape[1] != 2:
            raise ValueError(f"gt_segments must be (K, 2), got {tuple(gt.shape)}")
        k, n = gt.shape[0], segments.shape[0]
        giou_mat = pairwise_giou(segments, gt)
        conf_cost = 1.0 - torch.sigmoid(conf)
        loc = 2.0 * (1.0 - giou_mat) + conf_cost[None, :]

        if mode == "contrastive":
            omega = omega_ctx.omega if isinstance(omega_ctx, SimilarityMatrix) else omega_ctx
            omega = torch.as_tensor(omega).detach().double()
            if omega.shape != (k, n):
                raise ValueError(f"omega shape {tuple(omega.shape)} does not match ({k}, {n})")
            semantic = -ratio * omega
        elif mode == "caption":
            if caption_nll is None:
                raise ValueError("caption mode needs a caption_nll matrix")
            nll = torch.as_tensor(caption_nll).detach().double()
            if nll.shape != (k, n):
                raise ValueError(f"caption_nll shape {tuple(nll.shape)} does not match ({k}, {n})")
            semantic = ratio * nll
        else:
            semantic = torch.zeros(k, n, dtype=torch.float64)

        total = (semantic + loc).numpy()
    return CostMatrix(
        total=total,
        components={
            "semantic": semantic.numpy(),
            "giou": giou_mat.numpy(),
            "confidence": conf_cost.numpy(),
        },
    )


def _as_matrix(cost) -> np.ndarray:
    mat = cost.total if isinstance(cost, CostMatrix) else np.asarray(cost, dtype=np.float64)
    mat = np.asarray(mat, dtype=np.float64)
    if mat.ndim != 2:
        raise ValueError(f"cost must be a 2-d matrix, got shape {mat.shape}")
    if mat.shape[0] > mat.shape[1]:
        raise ValueError(f"need at least as many columns as rows, got {mat.shape}")
    if not np.all(np.isfinite(mat)):
        raise ValueError("cost matrix has non-finite entries")
    return mat


def _close(a: float, b: float) -> bool:
    return abs(a - b) <= _TIE_ATOL + _TIE_RTOL * max(1.0, abs(a), abs(b))


def hungarian(cost) -> Assignment:
    """Minimum-cost injective assignment of all rows, lexicographic among ties.

    The optimum value comes from an exact rectangular-assignment solve; a
    row-by-row refinement then walks columns in increasing order and keeps the
    first choice that still admits an optimal completion, which pins down the
    lexicographically smallest optimal assignment deterministically.
    """
    mat = _as_matrix(cost)
    k, n = mat.shape
    rows, cols = linear_sum_assignment(mat)
    optimum = float(mat[rows, cols].sum())

    chosen: list[int] = []
    available = list(range(n))
    remaining = optimum
    for row in range(k):
        for idx, col in enumerate(available):
            rest_cols = available[:idx] + available[idx + 1 :]
            if row + 1 < k:
                sub = mat[np.ix_(range(row + 1, k), rest_cols)]
                r2, c2 = linear_sum_assignment(sub)
                completion = float(sub[r2, c2].sum())
            else:
                completion = 0.0
            if _close(mat[row, col] + completion, remaining):
                chosen.append(col)
                available = rest_cols
                remaining -= mat[row, col]
                break
        else:  # numerical safety net; should be unreachable
            raise RuntimeError("no optimal completion found during tie-break refinement")

    pairs = tuple((row, col) for row, col in enumerate(chosen))
    return Assignment(pairs=pairs, total_cost=float(sum(mat[r, c] for r, c in pairs)))


def brute_force_match(cost) -> Assignment:
    """Exhaustive exact minimum over all injections; test oracle for `hungarian`.

    Guarded to K <= 6, N <= 8. Candidate column tuples are scanned in
    lexicographic order with a strict comparison, so the first minimum found is
    the lexicographically smallest one.
    """
    mat = _as_matrix(cost)
    k, n = mat.shape
    if k > 6 or n > 8:
        raise ValueError(f"brute force refused for shape {mat.shape}: limit is K <= 6, N <= 8")
    best_cols = None
    best_cost = np.inf
    row_idx = np.arange(k)
    for cols in itertools.permutations(range(n), k):
        total = float(mat[row_idx, list(cols)].sum())
        if total < best_cost:
            best_cost = total
            best_cols = cols
    pairs = tuple((row, col) for row, col in enumerate(best_cols))
    return Assignment(pairs=pairs, total_cost=best_cost)
