"""Input checks shared by the estimator and the CLI."""

from __future__ import annotations

import numpy as np


def check_images(X, size: tuple[int, int] | None = None) -> np.ndarray:
    """Coerce to float64 (N, 1, H, W) with finite values in [0, 1]."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        X = X[None, None]
    elif X.ndim == 3:
        X = X[:, None]
    if X.ndim != 4 or X.shape[1] != 1:
        raise ValueError(f"expected (N, H, W) or (N, 1, H, W) images, got shape {X.shape}")
    if size is not None and X.shape[2:] != tuple(size):
        raise ValueError(f"image size {X.shape[2:]} != configured {tuple(size)}")
    if not np.all(np.isfinite(X)):
        raise ValueError("images contain NaN or inf")
    if X.size and (X.min() < 0.0 or X.max() > 1.0):
        raise ValueError(f"intensities must lie in [0, 1], got [{X.min():.3g}, {X.max():.3g}]")
    return X


def check_masks(y, class_count: int, shape: tuple[int, ...] | None = None) -> np.ndarray:
    """Coerce to int64 (N, H, W) and verify every label is below class_count."""
    y = np.asarray(y)
    if y.ndim == 2:
        y = y[None]
    if y.ndim != 3:
        raise ValueError(f"expected (N, H, W) label masks, got shape {y.shape}")
    if not np.issubdtype(y.dtype, np.integer):
        if not np.all(np.mod(y, 1) == 0):
            raise ValueError("labels must be integers")
    y = y.astype(np.int64)
    if shape is not None and y.shape != tuple(shape):
        raise ValueError(f"mask shape {y.shape} != image shape {tuple(shape)}")
    bad = np.argwhere((y < 0) | (y >= class_count))
    if len(bad):
        n, r, c = bad[0]
        raise ValueError(f"label {y[n, r, c]} outside [0, {class_count}) at sample {n}, pixel (row={r}, col={c})")
    return y
