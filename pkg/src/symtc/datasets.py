"""Ready-made synthetic datasets built from phantom shapes and their shape model."""

from __future__ import annotations

import numpy as np

from .ndgrad import Rng
from .shapes.phantom import phantom_shape, render_image
from .shapes.raster import rasterize_shape
from .shapes.ssm import SsmModel, build_ssm, sample_ssm


def phantom_ssm(n_shapes: int = 20, size=(64, 64), seed: int = 0, retained_variance: float = 0.95) -> SsmModel:
    rng = Rng(seed)
    return build_ssm([phantom_shape(size, rng.child(i)) for i in range(n_shapes)], retained_variance)


def ssm_dataset(n: int = 4, size=(64, 64), seed: int = 0, three_class: bool = True, model: SsmModel | None = None):
    """(images (n, H, W), masks (n, H, W), shapes): SSM draws rasterized and rendered."""
    model = model or phantom_ssm(size=size, seed=seed)
    rng = Rng(seed + 1)
    shapes = [sample_ssm(model, seed=rng.child(i)) for i in range(n)]
    images = np.stack([render_image(s, size, rng.child(1000 + i)) for i, s in enumerate(shapes)])
    masks = np.stack([rasterize_shape(s, size, three_class) for s in shapes])
    return images, masks, shapes
