"""scikit-learn style wrapper around network training and inference."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_images, check_masks
from .config import LossConfig, NetworkConfig, OptimizerConfig
from .metrics import dsc_table
from .ndgrad import Rng
from .network import SymTC
from .shapes.elastic import augment_pair
from .training import TrainState, fit


class SymTCSegmenter(BaseEstimator, ClassifierMixin):
    """Per-pixel segmenter: fit(images, masks) then predict(images) -> label masks.

    ``score`` is the mean foreground DSC in percent.
    """

    def __init__(self, preset: str = "toy", class_count: int = 3, input_size=(64, 64), lr: float = 1e-4,
                 clip_norm: float = 1.0, epochs: int = 500, batch_size: int = 1, augment: bool = False,
                 elastic_sigma: float = 0.25, translate_px: int = 16, target_dsc: float | None = None,
                 random_state: int = 0):
        self.preset = preset
        self.class_count = class_count
        self.input_size = input_size
        self.lr = lr
        self.clip_norm = clip_norm
        self.epochs = epochs
        self.batch_size = batch_size
        self.augment = augment
        self.elastic_sigma = elastic_sigma
        self.translate_px = translate_px
        self.target_dsc = target_dsc
        self.random_state = random_state

    def _network_config(self) -> NetworkConfig:
        if self.preset == "toy":
            return NetworkConfig.toy(class_count=self.class_count, input_size=tuple(self.input_size))
        if self.preset == "micro":
            return NetworkConfig.micro(class_count=self.class_count)
        if self.preset == "full":
            return NetworkConfig.full(class_count=self.class_count)
        raise ValueError(f"unknown preset {self.preset!r}")

    def fit(self, X, y):
        cfg = self._network_config()
        X = check_images(X, cfg.input_size)
        y = check_masks(y, cfg.class_count, (X.shape[0],) + X.shape[2:])
        self.model_ = SymTC(cfg, self.random_state)
        state = TrainState.create(self.model_, OptimizerConfig(self.lr, self.clip_norm, self.batch_size, self.epochs),
                                  LossConfig(class_count=cfg.class_count))
        self.classes_ = np.arange(cfg.class_count)
        self.history_ = []

        def callback(epoch, loss):
            if self.target_dsc is None:
                return False
            return self.score(X, y) >= self.target_dsc

        aug = None
        if self.augment:
            def aug(img, mask, rng):
                return augment_pair(img, mask, rng, self.elastic_sigma, (9, 17), self.translate_px)

        self.history_ = fit(self.model_, X[:, 0], y, state, self.epochs, self.batch_size,
                            Rng(self.random_state), aug, callback)
        self.n_iter_ = len(self.history_)
        return self

    def predict_proba(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        X = check_images(X, self.model_.cfg.input_size)
        return np.concatenate([self.model_.predict_proba(X[i:i + 1]) for i in range(len(X))])

    def predict(self, X) -> np.ndarray:
        return self.predict_proba(X).argmax(axis=1)

    def score(self, X, y, sample_weight=None) -> float:
        check_is_fitted(self, "model_")
        pred = self.predict(X)
        y = check_masks(y, self.model_.cfg.class_count, pred.shape)
        return float(dsc_table(list(pred), list(y), self.model_.cfg.class_count).mean())
