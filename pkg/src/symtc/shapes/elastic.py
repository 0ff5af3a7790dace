"""Grid-based elastic deformation and the training-time augmentation pipeline."""

from __future__ import annotations

import numpy as np

from ..ndgrad import Rng
from ..ndgrad.ops import bilinear_sample
from ..robustness import shift


def corner_interp(n_in: int, n_out: int) -> np.ndarray:
    """(n_out, n_in) linear interpolation matrix with the end nodes on the end pixels."""
    if n_in == 1:
        return np.ones((n_out, 1))
    pos = np.linspace(0.0, n_in - 1.0, n_out)
    i0 = np.minimum(np.floor(pos).astype(int), n_in - 2)
    t = pos - i0
    R = np.zeros((n_out, n_in))
    R[np.arange(n_out), i0] = 1.0 - t
    R[np.arange(n_out), i0 + 1] = t
    return R


def node_displacements(shape: tuple[int, int], sigma: float, grid_n: int, rng: Rng) -> np.ndarray:
    """(grid_n, grid_n, 2) node offsets (dx, dy) in pixels, std sigma * cell size."""
    H, W = shape
    cell = np.array([(W - 1) / (grid_n - 1), (H - 1) / (grid_n - 1)])
    return rng.normal((grid_n, grid_n, 2)) * (sigma * cell)


def dense_field(nodes: np.ndarray, shape: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    """Bilinearly upsample node offsets to per-pixel (dx, dy)."""
    H, W = shape
    Ry = corner_interp(nodes.shape[0], H)
    Rx = corner_interp(nodes.shape[1], W)
    return Ry @ nodes[..., 0] @ Rx.T, Ry @ nodes[..., 1] @ Rx.T


def warp_pair(image: np.ndarray, mask: np.ndarray | None, dx: np.ndarray, dy: np.ndarray):
    """Backward warp: out(p) = in(p + d(p)); bilinear for intensities, nearest for labels."""
    H, W = image.shape
    ys, xs = np.mgrid[0:H, 0:W].astype(np.float64)
    sx, sy = xs + dx, ys + dy
    out = bilinear_sample(image, sx, sy)
    if mask is None:
        return out, None
    ix = np.clip(np.floor(sx + 0.5), 0, W - 1).astype(np.intp)
    iy = np.clip(np.floor(sy + 0.5), 0, H - 1).astype(np.intp)
    return out, mask[iy, ix]


def elastic_deform(image, mask, sigma: float, grid_n: int, seed: int | Rng = 0):
    """Random smooth warp driven by Gaussian offsets on a grid_n x grid_n node lattice."""
    image = np.asarray(image, dtype=np.float64)
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if grid_n < 2 or grid_n > min(image.shape):
        raise ValueError(f"grid_n={grid_n} must be in [2, {min(image.shape)}]")
    rng = seed if isinstance(seed, Rng) else Rng(seed)
    nodes = node_displacements(image.shape, sigma, grid_n, rng)
    dx, dy = dense_field(nodes, image.shape)
    return warp_pair(image, None if mask is None else np.asarray(mask), dx, dy)


def displacement_audit(shape=(64, 64), sigma: float = 0.25, grid_n: int = 9, seeds=range(100),
                       bound: float = 4.0) -> dict:
    """Node-offset magnitudes against bound * sigma * cell over many seeds."""
    H, W = shape
    cell = max((W - 1), (H - 1)) / (grid_n - 1)
    mags = np.concatenate([np.linalg.norm(node_displacements(shape, sigma, grid_n, Rng(s)), axis=-1).ravel()
                           for s in seeds])
    limit = bound * sigma * cell
    return {"max": float(mags.max()), "limit": float(limit), "nodes": int(mags.size),
            "outliers": int(np.sum(mags > limit)), "outlier_fraction": float(np.mean(mags > limit))}


def translate_pair(image, mask, dx: int, dy: int):
    """Integer translation with zero intensity / background fill."""
    image = shift(shift(np.asarray(image), dx, "horizontal"), dy, "vertical")
    if mask is not None:
        mask = shift(shift(np.asarray(mask), dx, "horizontal"), dy, "vertical")
    return image, mask


def augment_pair(image, mask, rng: Rng, sigma: float = 0.25, grids=(9, 17), translate_px: int = 0):
    """Successive elastic deformations on each grid, then an optional random translation."""
    for g in grids:
        image, mask = elastic_deform(image, mask, sigma, g, Rng(int(rng.integers(0, 2**62))))
    if translate_px:
        dx, dy = rng.integers(-translate_px, translate_px + 1, size=2)
        image, mask = translate_pair(image, mask, int(dx), int(dy))
    return image, mask
