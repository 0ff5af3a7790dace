"""One optimization step and a plain epoch loop."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import ndgrad as nd
from .config import LossConfig, OptimizerConfig
from .losses import combined_loss
from .network import SymTC
from .optim import Adam, clip_grad_norm

log = logging.getLogger(__name__)


class NonFiniteLossError(FloatingPointError):
    def __init__(self, terms: dict[str, float]):
        bad = [k for k, v in terms.items() if not np.isfinite(v)]
        super().__init__(f"non-finite loss term(s) {bad}: {terms}")
        self.terms = terms


@dataclass
class TrainState:
    optimizer: Adam
    loss_cfg: LossConfig
    clip_norm: float = 1.0
    step: int = 0
    history: list[float] = field(default_factory=list)

    @classmethod
    def create(cls, model: SymTC, opt_cfg: OptimizerConfig | None = None,
               loss_cfg: LossConfig | None = None) -> "TrainState":
        opt_cfg = opt_cfg or OptimizerConfig()
        loss_cfg = loss_cfg or LossConfig(class_count=model.cfg.class_count)
        return cls(Adam(model.parameters(), lr=opt_cfg.lr), loss_cfg, opt_cfg.clip_norm)


def as_batch(images, labels) -> tuple[np.ndarray, np.ndarray]:
    images = np.asarray(images, dtype=np.float64)
    labels = np.asarray(labels)
    if images.ndim == 2:
        images = images[None, None]
    elif images.ndim == 3:
        images = images[:, None]
    if labels.ndim == 2:
        labels = labels[None]
    if images.shape[0] != labels.shape[0] or images.shape[2:] != labels.shape[1:]:
        raise nd.ShapeError("train_step", images.shape, labels.shape, detail="image/label batch mismatch")
    return images, labels.astype(np.int64)


def train_step(model: SymTC, batch, state: TrainState) -> float:
    """forward -> combined loss -> backward -> clip -> Adam. Returns the loss before the update."""
    images, labels = as_batch(*batch)
    with nd.Tape() as tape:
        probs = nd.softmax(model(images), axis=1)
        loss, terms = combined_loss(probs, labels, state.loss_cfg, return_terms=True)
    value = float(loss.value)
    if not np.isfinite(value):
        raise NonFiniteLossError({k: float(v.value) for k, v in terms.items()})
    grads = state.optimizer.gather(tape.backward(loss))
    grads, norm = clip_grad_norm(grads, state.clip_norm)
    state.optimizer.step(grads)
    state.step += 1
    state.history.append(value)
    log.debug("step %d loss %.6f grad-norm %.4f", state.step, value, norm)
    return value


def fit(model: SymTC, images, labels, state: TrainState, epochs: int, batch_size: int = 1,
        rng: nd.Rng | None = None, augment=None, callback=None) -> list[float]:
    """Shuffled mini-batch epochs; returns per-epoch mean loss.

    `augment(image, label, rng)` may return a transformed pair; `callback(epoch, loss)`
    returning True stops training early.
    """
    images, labels = as_batch(images, labels)
    rng = rng or nd.Rng(0)
    n = images.shape[0]
    epoch_losses = []
    for epoch in range(epochs):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            bi, bl = images[idx], labels[idx]
            if augment is not None:
                pairs = [augment(bi[k, 0], bl[k], rng) for k in range(len(idx))]
                bi = np.stack([p[0] for p in pairs])[:, None]
                bl = np.stack([p[1] for p in pairs])
            losses.append(train_step(model, (bi, bl), state))
        epoch_losses.append(float(np.mean(losses)))
        if callback is not None and callback(epoch, epoch_losses[-1]):
            break
    return epoch_losses
