"""Lumbar spine segmentation with parallel CNN/Transformer modules and relative position attention."""

from . import ndgrad
from .attention import RpeParams, TokenSet, rmha_output, rpe_scores
from .config import LossConfig, NetworkConfig, RunConfig, TcModuleConfig
from .estimator import SymTCSegmenter
from .losses import aw_ce_loss, combined_loss, dice_loss
from .metrics import dsc_metric, hd95
from .network import SymTC, TCModule, param_count, symtc_forward
from .robustness import RobustnessReport, robustness_sweep
from .shapes import StatisticalShapeModel
from .training import train_step

__version__ = "0.1.0"
__all__ = [n for n in dir() if not n.startswith("_")]
