"""Even-odd scanline polygon fill at pixel centers."""

from __future__ import annotations

import numpy as np

from .shape import LUMBAR_OBJECTS, VERTEBRAE, Shape


class DegeneratePolygonError(ValueError):
    pass


def fill_polygon(poly, size: tuple[int, int]) -> np.ndarray:
    """Boolean (H, W) mask of pixel centers (x=col, y=row) inside poly by the even-odd rule.

    An edge counts at row y when exactly one endpoint lies strictly below y, and a
    pixel is filled for x_a <= x < x_b between consecutive crossings.
    """
    poly = np.asarray(poly, dtype=np.float64).reshape(-1, 2)
    if len(poly) < 3:
        raise DegeneratePolygonError(f"polygon has {len(poly)} points, need at least 3")
    H, W = size
    mask = np.zeros((H, W), dtype=bool)
    x0, y0 = poly[:, 0], poly[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    lo = max(int(np.ceil(y0.min())), 0)
    hi = min(int(np.floor(y0.max())), H - 1)
    for y in range(lo, hi + 1):
        active = (y0 > y) != (y1 > y)
        if not active.any():
            continue
        xs = np.sort(x0[active] + (y - y0[active]) * (x1[active] - x0[active]) / (y1[active] - y0[active]))
        for xa, xb in zip(xs[0::2], xs[1::2]):
            a = max(int(np.ceil(xa)), 0)
            b = min(int(np.ceil(xb)), W)
            if b > a:
                mask[y, a:b] = True
    return mask


def label_map(names, three_class: bool = False) -> dict[str, int]:
    """Object name -> label. 12-class: L1..L5, S1, D1..D5 -> 1..11; 3-class: vertebra 1, disc 2."""
    if three_class:
        return {n: (1 if n in VERTEBRAE else 2) for n in names}
    order = {n: i + 1 for i, n in enumerate(LUMBAR_OBJECTS)}
    return {n: order.get(n, i + 1) for i, n in enumerate(names)}


def rasterize_shape(shape: Shape, size: tuple[int, int], three_class: bool = False) -> np.ndarray:
    """uint8 label mask; later-listed objects overwrite earlier ones."""
    labels = label_map(shape.names, three_class)
    mask = np.zeros(size, dtype=np.uint8)
    for name, poly in zip(shape.names, shape.polygons):
        mask[fill_polygon(poly, size)] = labels[name]
    return mask

