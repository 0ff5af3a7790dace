"""Synthetic sagittal lumbar-spine shapes and images for tests and demos."""

from __future__ import annotations

import numpy as np
from scipy.ndimage import gaussian_filter

from ..ndgrad import Rng
from .raster import rasterize_shape
from .shape import VERTEBRAE, Shape

VERTEBRA_POINTS = 16
DISC_POINTS = 12

# Stacking order from cranial to caudal; labels follow LUMBAR_OBJECTS regardless.
_STACK = ("L1", "D1", "L2", "D2", "L3", "D3", "L4", "D4", "L5", "D5", "S1")


def superellipse(w: float, h: float, n_points: int, power: float) -> np.ndarray:
    """Convex rounded-box outline centered at the origin, counter-clockwise in (x, y)."""
    t = 2.0 * np.pi * (np.arange(n_points) + 0.5) / n_points
    c, s = np.cos(t), np.sin(t)
    e = 2.0 / power
    return np.stack([0.5 * w * np.sign(c) * np.abs(c) ** e, 0.5 * h * np.sign(s) * np.abs(s) ** e], axis=1)


def phantom_shape(size: tuple[int, int] = (64, 64), rng: Rng | int | None = None, jitter: float = 1.0) -> Shape:
    """A lordotic stack of five lumbar vertebrae, the sacrum and five discs.

    jitter = 0 gives the canonical shape; larger values widen the random variation
    in curvature, object sizes and placement.
    """
    rng = rng if isinstance(rng, Rng) else Rng(0 if rng is None else rng)
    H, W = size
    z = rng.normal(12) * jitter
    unit = H / 64.0
    v_h, d_h, gap = 7.0 * unit, 2.6 * unit, 0.6 * unit
    heights = {n: (v_h if n in VERTEBRAE else d_h) * (1.0 + 0.06 * z[i]) for i, n in enumerate(_STACK)}
    heights["S1"] *= 1.15
    total = sum(heights.values()) + gap * (len(_STACK) - 1)
    top = 0.5 * (H - total) + 1.5 * unit * z[11]
    bend = (0.05 + 0.015 * z[0]) * W
    x_mid = 0.5 * W + 1.5 * unit * z[1]
    v_w = (15.0 + 0.8 * z[2]) * unit
    d_w = (13.0 + 0.8 * z[3]) * unit

    names, polys = [], {}
    y = top
    for n in _STACK:
        h = heights[n]
        yc = y + 0.5 * h
        s = (yc - 0.5 * H) / (0.5 * total)  # -1 at top .. 1 at bottom
        xc = x_mid + bend * (1.0 - s * s) - 0.5 * bend
        slope = -2.0 * bend * s / (0.5 * total)  # dx/dy of the spine axis
        angle = -np.arctan(slope)
        if n == "S1":
            angle += 0.25
        if n in VERTEBRAE:
            poly = superellipse(v_w * (1.1 if n == "S1" else 1.0), h, VERTEBRA_POINTS, 5.0)
        else:
            poly = superellipse(d_w, h, DISC_POINTS, 3.0)
        c, si = np.cos(angle), np.sin(angle)
        rot = np.array([[c, -si], [si, c]])
        polys[n] = poly @ rot.T + np.array([xc, yc])
        y += h + gap
    for n in ("L1", "L2", "L3", "L4", "L5", "S1", "D1", "D2", "D3", "D4", "D5"):
        names.append(n)
    return Shape(names, [polys[n] for n in names])


def render_image(shape: Shape, size: tuple[int, int] = (64, 64), rng: Rng | int | None = None,
                 noise: float = 0.02) -> np.ndarray:
    """T2-like intensities in [0, 1]: bright discs, mid-gray bone with a dark rim, textured background."""
    rng = rng if isinstance(rng, Rng) else Rng(0 if rng is None else rng)
    H, W = size
    mask = rasterize_shape(shape, size, three_class=True)
    yy, xx = np.mgrid[0:H, 0:W] / max(H, W)
    img = 0.12 + 0.06 * xx + 0.04 * np.sin(6.0 * yy)
    img = np.where(mask == 1, 0.55, img)
    img = np.where(mask == 2, 0.85, img)
    bone = mask == 1
    inner = bone & np.roll(bone, 1, 0) & np.roll(bone, -1, 0) & np.roll(bone, 1, 1) & np.roll(bone, -1, 1)
    img = np.where(bone & ~inner, 0.35, img)
    img = gaussian_filter(img, 0.6, mode="nearest")
    if noise > 0:
        img = img + noise * rng.normal((H, W))
    return np.clip(img, 0.0, 1.0)


def phantom_sample(size=(64, 64), seed: int = 0, jitter: float = 1.0, three_class: bool = False):
    """(image, mask, shape) triple with independent shape and noise streams."""
    rng = Rng(seed)
    shape = phantom_shape(size, rng.child(0), jitter)
    image = render_image(shape, size, rng.child(1))
    return image, rasterize_shape(shape, size, three_class), shape
