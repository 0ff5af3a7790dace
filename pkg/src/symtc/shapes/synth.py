"""Reference image + virtual shape -> synthesized, labeled image."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .biomech import EnergyConfig, FitResult, fit_transform, warp_image
from .raster import rasterize_shape
from .shape import Shape


class NonDiffeomorphicError(RuntimeError):
    def __init__(self, fraction: float, required: float):
        super().__init__(f"det F > 0 at only {fraction:.4f} of quadrature points (need {required})")
        self.fraction = fraction


@dataclass
class SynthSample:
    image: np.ndarray
    mask: np.ndarray
    shape: Shape
    fit: FitResult


def synth_sample(reference_image, reference_shape: Shape, virtual: Shape, cfg: EnergyConfig | None = None,
                 three_class: bool = False, min_det_fraction: float = 0.99) -> SynthSample:
    """Fit T with T(virtual) ~ reference, warp the reference image by T and label by the virtual shape."""
    reference_image = np.asarray(reference_image, dtype=np.float64)
    size = reference_image.shape
    fit = fit_transform(virtual, reference_shape, cfg, size)
    if fit.det_positive_fraction < min_det_fraction:
        raise NonDiffeomorphicError(fit.det_positive_fraction, min_det_fraction)
    image = np.clip(warp_image(reference_image, fit.net, size), 0.0, 1.0)
    return SynthSample(image, rasterize_shape(virtual, size, three_class), virtual, fit)


def synth_dataset(references, virtuals, cfg: EnergyConfig | None = None, three_class: bool = False,
                  min_det_fraction: float = 0.99):
    """Yield (reference index, virtual index, sample-or-error) for every reference x virtual pair."""
    for i, (img, shp) in enumerate(references):
        for j, v in enumerate(virtuals):
            try:
                yield i, j, synth_sample(img, shp, v, cfg, three_class, min_det_fraction)
            except NonDiffeomorphicError as exc:
                yield i, j, exc
