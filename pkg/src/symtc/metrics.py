"""Dice similarity (percent) and 95th-percentile Hausdorff distance."""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree


class MissingClassError(ValueError):
    """HD95 is undefined when the class is absent from either mask."""

    def __init__(self, cls: int, where: str):
        super().__init__(f"class {cls} absent from {where} mask")
        self.cls = cls
        self.where = where


def _check_pair(pred, truth) -> tuple[np.ndarray, np.ndarray]:
    pred, truth = np.asarray(pred), np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValueError(f"mask shapes differ: {pred.shape} vs {truth.shape}")
    return pred, truth


def _check_class(cls: int, class_count: int | None) -> None:
    if not isinstance(cls, (int, np.integer)) or cls < 0 or (class_count is not None and cls >= class_count):
        raise ValueError(f"invalid class id {cls!r}")


def dsc_metric(pred, truth, cls: int, class_count: int | None = None) -> float:
    """100 * 2|P & T| / (|P| + |T|); 100 when the class is absent from both."""
    pred, truth = _check_pair(pred, truth)
    _check_class(cls, class_count)
    p, t = pred == cls, truth == cls
    denom = int(p.sum()) + int(t.sum())
    if denom == 0:
        return 100.0
    return 100.0 * 2.0 * int(np.logical_and(p, t).sum()) / denom


def boundary(mask: np.ndarray) -> np.ndarray:
    """(K, 2) row/col coords of pixels with a 4-neighbor outside the mask or on the border."""
    mask = np.asarray(mask, dtype=bool)
    padded = np.pad(mask, 1, constant_values=False)
    interior = (padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:])
    return np.argwhere(mask & ~interior)


def directed_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance from each point of a to its nearest point in b."""
    return cKDTree(b).query(a, k=1)[0]


def hd95(pred, truth, cls: int, spacing: float | None = None) -> float:
    """Max of the two directed 95th-percentile boundary distances."""
    pred, truth = _check_pair(pred, truth)
    _check_class(cls, None)
    bp, bt = boundary(pred == cls), boundary(truth == cls)
    if len(bp) == 0:
        raise MissingClassError(int(cls), "predicted")
    if len(bt) == 0:
        raise MissingClassError(int(cls), "reference")
    d = max(np.percentile(directed_distances(bp, bt), 95), np.percentile(directed_distances(bt, bp), 95))
    return float(d) * (1.0 if spacing is None else float(spacing))


def dsc_table(preds, truths, class_count: int, classes=None) -> np.ndarray:
    """(samples, classes) DSC matrix; background excluded unless classes says otherwise."""
    classes = list(range(1, class_count)) if classes is None else list(classes)
    return np.array([[dsc_metric(p, t, c, class_count) for c in classes] for p, t in zip(preds, truths)])


def hd95_table(preds, truths, class_count: int, classes=None, spacing=None) -> np.ndarray:
    """(samples, classes) HD95 matrix with NaN where the class is missing."""
    classes = list(range(1, class_count)) if classes is None else list(classes)
    out = np.full((len(preds), len(classes)), np.nan)
    for i, (p, t) in enumerate(zip(preds, truths)):
        for j, c in enumerate(classes):
            try:
                out[i, j] = hd95(p, t, c, spacing)
            except MissingClassError:
                pass
    return out


def mean_dsc(preds, truths, class_count: int, classes=None) -> float:
    return float(dsc_table(preds, truths, class_count, classes).mean())
