"""Soft Dice, area-weighted cross-entropy and their weighted sum."""

from __future__ import annotations

import numpy as np

from . import ndgrad as nd
from .config import LossConfig
from .ndgrad import DiffArray

PROB_FLOOR = 1e-12


def _batched(probs, labels) -> tuple[DiffArray, np.ndarray]:
    """Promote (M, H, W) / (H, W) to (N, M, H, W) / (N, H, W) and check shapes."""
    probs = nd.as_array(probs)
    labels = np.asarray(labels)
    if probs.ndim == 3:
        probs = nd.reshape(probs, (1,) + probs.shape)
    if labels.ndim == 2:
        labels = labels[None]
    if probs.ndim != 4 or labels.shape != (probs.shape[0],) + probs.shape[2:]:
        raise nd.ShapeError("loss", probs.shape, labels.shape, detail="probs (N,M,H,W) vs labels (N,H,W)")
    if not np.issubdtype(labels.dtype, np.integer):
        raise ValueError("labels must be integer")
    if labels.size and (labels.min() < 0 or labels.max() >= probs.shape[1]):
        raise ValueError(f"labels outside [0, {probs.shape[1]})")
    return probs, labels


def one_hot(labels: np.ndarray, class_count: int) -> np.ndarray:
    """(N, H, W) integer labels -> (N, M, H, W) float one-hot."""
    return (labels[:, None] == np.arange(class_count)[None, :, None, None]).astype(np.float64)


def dice_loss(probs, labels, cfg: LossConfig | None = None) -> DiffArray:
    """Per-class soft Dice loss, averaged over classes and samples."""
    cfg = cfg or LossConfig()
    probs, labels = _batched(probs, labels)
    sums = probs.value.sum(axis=1)
    if np.max(np.abs(sums - 1.0)) > 1e-6:
        raise ValueError(f"probabilities not normalized per pixel (max deviation {np.max(np.abs(sums - 1.0)):.3g})")
    y = one_hot(labels, probs.shape[1])
    inter = nd.sum(probs * y, axis=(2, 3))
    p_sum = nd.sum(probs, axis=(2, 3))
    ratio = (2.0 * inter + cfg.epsilon) / ((p_sum + y.sum(axis=(2, 3))) + cfg.epsilon)
    return 1.0 - nd.mean(ratio)


def area_weights(labels, class_count: int) -> np.ndarray:
    """Weights proportional to 1 / max(area, 1), normalized to sum to one."""
    labels = np.asarray(labels)
    area = np.bincount(labels.ravel(), minlength=class_count)[:class_count]
    inv = 1.0 / np.maximum(area, 1)
    return inv / inv.sum()


def aw_ce_loss(probs, labels, cfg: LossConfig | None = None) -> DiffArray:
    """Area-weighted cross-entropy, averaged over pixels and samples."""
    cfg = cfg or LossConfig()
    probs, labels = _batched(probs, labels)
    N, M, H, W = probs.shape
    w = np.stack([area_weights(labels[n], M) for n in range(N)])[:, :, None, None]
    y = one_hot(labels, M)
    logp = nd.log(nd.clip(probs, PROB_FLOOR, None))
    return -nd.sum(logp * (w * y)) / float(N * H * W)


def combined_loss(probs, labels, cfg: LossConfig | None = None, return_terms: bool = False):
    """dice_weight * Dice + ce_weight * area-weighted CE."""
    cfg = cfg or LossConfig()
    d = dice_loss(probs, labels, cfg)
    c = aw_ce_loss(probs, labels, cfg)
    total = cfg.dice_weight * d + cfg.ce_weight * c
    return (total, {"dice": d, "aw_ce": c}) if return_terms else total
