"""Landmark shapes, shape statistics, rasterization, augmentation and image synthesis."""

from .biomech import EnergyConfig, Mesh, TransformNet, fit_transform, jacobian_audit, strain_energy, warp_image
from .elastic import augment_pair, displacement_audit, elastic_deform
from .phantom import phantom_sample, phantom_shape, render_image
from .raster import DegeneratePolygonError, fill_polygon, rasterize_shape
from .shape import LUMBAR_OBJECTS, Shape, TopologyError, check_simple
from .ssm import SsmModel, StatisticalShapeModel, build_ssm, sample_ssm
from .synth import NonDiffeomorphicError, SynthSample, synth_dataset, synth_sample

__all__ = [n for n in dir() if not n.startswith("_")]
