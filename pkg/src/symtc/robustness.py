"""Translation-robustness sweep."""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .metrics import dsc_table, hd95_table

AXES = ("horizontal", "vertical")


def shift(arr: np.ndarray, offset: int, axis: str, fill=0) -> np.ndarray:
    """Translate the last two dims by offset pixels; vacated pixels take the fill value."""
    if axis not in AXES:
        raise ValueError(f"axis must be one of {AXES}")
    ax = -1 if axis == "horizontal" else -2
    out = np.full_like(arr, fill)
    n = arr.shape[ax]
    if abs(offset) >= n:
        return out
    src = [slice(None)] * arr.ndim
    dst = [slice(None)] * arr.ndim
    if offset >= 0:
        src[ax], dst[ax] = slice(0, n - offset), slice(offset, n)
    else:
        src[ax], dst[ax] = slice(-offset, n), slice(0, n + offset)
    out[tuple(dst)] = arr[tuple(src)]
    return out


@dataclass
class RobustnessReport:
    axis: str
    shifts: list[int]
    dsc: list[float]
    hd95: list[float] | None = None
    meta: dict = field(default_factory=dict)

    def rows(self) -> list[tuple]:
        hd = self.hd95 or [None] * len(self.shifts)
        return list(zip(self.shifts, self.dsc, hd))

    def to_tsv(self) -> str:
        buf = io.StringIO()
        cols = ["axis", "shift_px", "dsc"] + (["hd95"] if self.hd95 is not None else [])
        buf.write("\t".join(cols) + "\n")
        for s, d, h in self.rows():
            vals = [self.axis, str(s), f"{d:.3f}"] + ([f"{h:.3f}"] if self.hd95 is not None else [])
            buf.write("\t".join(vals) + "\n")
        return buf.getvalue()

    def to_text(self) -> str:
        head = f"{'shift':>6} {'DSC':>8}" + (f" {'HD95':>8}" if self.hd95 is not None else "")
        lines = [f"{self.axis} translation", head]
        for s, d, h in self.rows():
            lines.append(f"{s:>6d} {d:>8.3f}" + (f" {h:>8.3f}" if h is not None else ""))
        return "\n".join(lines)


def evaluate(predict: Callable[[np.ndarray], np.ndarray], images, labels, class_count: int,
             with_hd95: bool = False) -> tuple[float, float | None]:
    """Mean foreground DSC (and HD95) of predict over a dataset of (H, W) images."""
    preds = [predict(img) for img in images]
    dsc = float(dsc_table(preds, labels, class_count).mean())
    hd = float(np.nanmean(hd95_table(preds, labels, class_count))) if with_hd95 else None
    return dsc, hd


def robustness_sweep(predict: Callable[[np.ndarray], np.ndarray], images, labels, class_count: int,
                     axis: str = "horizontal", shifts=(0, 10, 20, 30, 40), max_shift: int = 40,
                     image_fill: float = 0.0, label_fill: int = 0, with_hd95: bool = False) -> RobustnessReport:
    """DSC per shift magnitude, averaged over both directions and all samples."""
    shifts = [int(s) for s in shifts]
    if any(s < 0 or s > max_shift for s in shifts):
        raise ValueError(f"shift magnitudes must lie in [0, {max_shift}]")
    dsc_rows, hd_rows = [], []
    for s in shifts:
        preds, truths = [], []
        for offset in ((0,) if s == 0 else (s, -s)):
            for img, lab in zip(images, labels):
                preds.append(predict(shift(np.asarray(img), offset, axis, image_fill)))
                truths.append(shift(np.asarray(lab), offset, axis, label_fill))
        dsc_rows.append(float(dsc_table(preds, truths, class_count).mean()))
        if with_hd95:
            hd_rows.append(float(np.nanmean(hd95_table(preds, truths, class_count))))
    return RobustnessReport(axis, shifts, dsc_rows, hd_rows if with_hd95 else None)
