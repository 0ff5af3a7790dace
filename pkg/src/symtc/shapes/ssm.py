"""PCA statistical shape model over aligned landmark vectors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ..ndgrad import Rng
from .shape import Shape, TopologyError


@dataclass
class SsmModel:
    names: tuple[str, ...]
    counts: tuple[int, ...]
    mean: np.ndarray          # (2K,) in the image frame
    modes: np.ndarray         # (2K, M), orthonormal columns
    variances: np.ndarray     # (M,), nonincreasing
    retained_variance: float
    align: str = "translation"
    total_variance: float = 0.0

    @property
    def mode_count(self) -> int:
        return self.modes.shape[1]

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.variances)

    def mean_shape(self) -> Shape:
        return Shape.from_vector(self.mean, self.names, self.counts)

    def reconstruct(self, coefficients, offset=(0.0, 0.0)) -> Shape:
        c = np.zeros(self.mode_count)
        coefficients = np.asarray(coefficients, dtype=np.float64).ravel()
        if len(coefficients) > self.mode_count:
            raise ValueError(f"{len(coefficients)} coefficients for {self.mode_count} modes")
        c[:len(coefficients)] = coefficients
        vec = self.mean + self.modes @ c
        return Shape.from_vector(vec.reshape(-1, 2) + np.asarray(offset), self.names, self.counts)

    def project(self, shape: Shape) -> tuple[np.ndarray, np.ndarray]:
        """(coefficients, centroid offset) such that reconstruct(c, offset) approximates shape."""
        self.mean_shape().check_topology(shape)
        pts, offset = _align_one(shape.points(), self.mean.reshape(-1, 2), self.align)
        return self.modes.T @ (pts.ravel() - self.mean), offset

    def to_dict(self) -> dict:
        return {"names": list(self.names), "counts": list(self.counts), "mean": self.mean.tolist(),
                "modes": self.modes.tolist(), "variances": self.variances.tolist(),
                "retained_variance": self.retained_variance, "align": self.align,
                "total_variance": self.total_variance}

    @classmethod
    def from_dict(cls, d: dict) -> "SsmModel":
        k2 = 2 * sum(d["counts"])
        modes = np.asarray(d["modes"], dtype=np.float64).reshape(k2, -1)
        return cls(tuple(d["names"]), tuple(d["counts"]), np.asarray(d["mean"], dtype=np.float64), modes,
                   np.asarray(d["variances"], dtype=np.float64), float(d["retained_variance"]),
                   d.get("align", "translation"), float(d.get("total_variance", 0.0)))


def _centroid(pts: np.ndarray) -> np.ndarray:
    return pts.mean(axis=0)


def _align_one(pts: np.ndarray, target: np.ndarray, align: str) -> tuple[np.ndarray, np.ndarray]:
    """Align pts to target's frame; returns (aligned points, translation removed)."""
    c, ct = _centroid(pts), _centroid(target)
    moved = pts - c
    if align == "similarity":
        a, b = moved, target - ct
        u, s, vt = np.linalg.svd(a.T @ b)
        d = np.sign(np.linalg.det(u @ vt)) or 1.0
        fix = np.diag([1.0, d])
        rot = u @ fix @ vt
        scale = (s * np.diag(fix)).sum() / max((a * a).sum(), 1e-300)
        moved = scale * a @ rot
    elif align != "translation":
        raise ValueError(f"unknown alignment {align!r}")
    return moved + ct, c - ct


def build_ssm(shapes: list[Shape], retained_variance: float = 0.95, align: str = "translation",
              iterations: int = 5) -> SsmModel:
    """Centroid-align the shapes, eigendecompose their covariance and keep the leading modes."""
    if len(shapes) < 2:
        raise ValueError("need at least two shapes")
    if not 0.0 < retained_variance <= 1.0:
        raise ValueError("retained_variance must be in (0, 1]")
    ref = shapes[0]
    for i, s in enumerate(shapes[1:], start=1):
        ref.check_topology(s, f"shape {i}")
    pts = [s.points() for s in shapes]
    frame = np.mean([_centroid(p) for p in pts], axis=0)
    target = pts[0] - _centroid(pts[0]) + frame
    for _ in range(iterations if align == "similarity" else 1):
        aligned = np.stack([_align_one(p, target, align)[0].ravel() for p in pts])
        target = aligned.mean(axis=0).reshape(-1, 2)
    mean = aligned.mean(axis=0)
    X = aligned - mean
    cov = X.T @ X / (len(shapes) - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals, evecs = np.clip(evals[order], 0.0, None), evecs[:, order]
    total = float(evals.sum())
    # round-off floor relative to the coordinate magnitude, not just the spread
    tol = max(1e-12 * total, 1e-20 * float(np.mean(aligned ** 2)) * aligned.shape[1], 1e-300)
    rank = int(np.sum(evals > tol))
    if total <= 0.0 or rank == 0:
        keep = 0
    else:
        frac = np.cumsum(evals[:rank]) / total
        keep = min(int(np.searchsorted(frac, retained_variance - 1e-12) + 1), rank)
    modes = evecs[:, :keep]
    # deterministic signs: largest-magnitude entry of each mode is positive
    if keep:
        idx = np.argmax(np.abs(modes), axis=0)
        modes = modes * np.sign(modes[idx, np.arange(keep)])
    return SsmModel(ref.names, ref.counts, mean, modes, evals[:keep].copy(), retained_variance, align, total)


def truncated_normal(rng: Rng, n: int, clamp: float) -> np.ndarray:
    """Standard normal draws, resampling any value beyond +/-clamp."""
    z = rng.normal(n)
    bad = np.abs(z) > clamp
    while bad.any():
        z[bad] = rng.normal(int(bad.sum()))
        bad = np.abs(z) > clamp
    return z


def sample_ssm(model: SsmModel, coefficients=None, seed: int | Rng | None = None, clamp: float = 3.0) -> Shape:
    """mean + sum_k c_k mode_k; with a seed, c_k ~ N(0, var_k) truncated at +/-clamp std."""
    if coefficients is None:
        if seed is None:
            raise ValueError("pass coefficients or a seed")
        rng = seed if isinstance(seed, Rng) else Rng(seed)
        coefficients = truncated_normal(rng, model.mode_count, clamp) * model.std
    return model.reconstruct(coefficients)


class StatisticalShapeModel(BaseEstimator, TransformerMixin):
    """Estimator wrapper: fit on shapes (or landmark vectors), transform to mode coefficients."""

    def __init__(self, retained_variance: float = 0.95, align: str = "translation", clamp: float = 3.0):
        self.retained_variance = retained_variance
        self.align = align
        self.clamp = clamp

    def _as_shapes(self, X) -> list[Shape]:
        if len(X) and isinstance(X[0], Shape):
            return list(X)
        names, counts = self.model_.names, self.model_.counts
        return [Shape.from_vector(v, names, counts) for v in np.asarray(X, dtype=np.float64)]

    def fit(self, X, y=None):
        if not len(X) or not isinstance(X[0], Shape):
            raise TopologyError("fit expects a list of Shape objects")
        self.model_ = build_ssm(list(X), self.retained_variance, self.align)
        self.n_components_ = self.model_.mode_count
        return self

    def transform(self, X) -> np.ndarray:
        return np.stack([self.model_.project(s)[0] for s in self._as_shapes(X)])

    def inverse_transform(self, C) -> np.ndarray:
        return np.stack([self.model_.reconstruct(c).to_vector() for c in np.atleast_2d(C)])

    def sample(self, n: int, seed: int = 0) -> list[Shape]:
        rng = Rng(seed)
        return [sample_ssm(self.model_, seed=rng.child(i), clamp=self.clamp) for i in range(n)]
