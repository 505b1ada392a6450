"""Shared test utilities: finite-difference oracles and tiny builders."""

import numpy as np
import torch


def central_difference(f, param: torch.Tensor, flat_index: int, h: float = 1e-5) -> float:
    """Central finite difference of scalar-valued f() w.r.t. one parameter entry."""
    flat = param.data.view(-1)
    orig = flat[flat_index].item()
    flat[flat_index] = orig + h
    f_plus = float(f().detach())
    flat[flat_index] = orig - h
    f_minus = float(f().detach())
    flat[flat_index] = orig
    return (f_plus - f_minus) / (2 * h)


def relative_error(a: float, b: float, floor: float = 1e-8) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)


def assert_gradient_close(analytic: float, fd: float, rel_tol: float = 1e-4) -> None:
    """Relative check where finite differences can resolve the gradient, absolute below."""
    if abs(analytic) < 1e-6:
        assert abs(analytic - fd) < 1e-6
    else:
        assert relative_error(analytic, fd) < rel_tol


def softmax_ce_oracle(logits: np.ndarray, targets: np.ndarray) -> float:
    """Independent numpy re-computation of mean softmax cross-entropy."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    picked = shifted[np.arange(len(targets)), targets]
    return float(np.mean(log_z - picked))


def iou_oracle(a, b) -> float:
    inter = max(0.0, min(a[1], b[1]) - max(a[0], b[0]))
    union = (a[1] - a[0]) + (b[1] - b[0]) - inter
    return inter / union


def giou_oracle(a, b) -> float:
    inter = max(0.0, min(a[1], b[1]) - max(a[0], b[0]))
    union = (a[1] - a[0]) + (b[1] - b[0]) - inter
    hull = max(a[1], b[1]) - min(a[0], b[0])
    return inter / union - (hull - union) / hull
