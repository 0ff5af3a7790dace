"""Finite-difference checking of tape gradients.

Relative error of an element is ``|analytic - numeric| / max(|analytic|,
|numeric|, floor)`` where ``floor = 1e-6 * max|numeric| + 1e-12``, the max
taken over every array in one check. The floor keeps elements whose true
gradient is (near) zero from dividing by noise.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import DiffArray, Tape


def numerical_gradient(f: Callable[[], float], arr: DiffArray, h: float = 1e-5) -> np.ndarray:
    """Central differences of scalar ``f()`` with respect to every element of ``arr``."""
    base = arr.value
    grad = np.zeros(base.shape)
    flat = grad.reshape(-1)
    work = base.copy()
    try:
        for i in range(work.size):
            orig = work.flat[i]
            work.flat[i] = orig + h
            arr.value = work.copy()
            fp = f()
            work.flat[i] = orig - h
            arr.value = work.copy()
            fm = f()
            work.flat[i] = orig
            flat[i] = (fp - fm) / (2.0 * h)
    finally:
        arr.value = base
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, scale: float | None = None) -> np.ndarray:
    """Elementwise relative error; ``scale`` defaults to max|numeric| of this array."""
    if scale is None:
        scale = float(np.abs(numeric).max(initial=0.0))
    floor = 1e-6 * scale + 1e-12
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def check_gradients(
    loss_fn: Callable[[], DiffArray],
    arrays: Sequence[DiffArray] | dict[str, DiffArray],
    h: float = 1e-5,
    max_elements: int | None = None,
    rng: np.random.Generator | None = None,
    scale: float | None = None,
) -> dict[str, float]:
    """Worst relative error per array between tape and finite-difference gradients.

    ``loss_fn`` must rebuild the scalar loss from the arrays' current values.
    With ``max_elements`` only a random subset of each array's entries is probed.
    ``scale`` overrides the gradient magnitude used for the floor, for losses whose
    gradient is identically zero at the probe point.
    """
    named = dict(arrays) if isinstance(arrays, dict) else {
        (a.name or f"arg{i}"): a for i, a in enumerate(arrays)
    }
    with Tape() as tape:
        loss = loss_fn()
    grads = tape.backward(loss)

    def scalar() -> float:
        return float(loss_fn().value.reshape(-1)[0])

    rng = rng or np.random.default_rng(0)
    pairs = {}
    for name, arr in named.items():
        analytic = grads.get(arr)
        if analytic is None:
            analytic = np.zeros(arr.shape)
        if max_elements is None or arr.size <= max_elements:
            pairs[name] = (analytic.reshape(-1), numerical_gradient(scalar, arr, h).reshape(-1))
            continue
        idx = rng.choice(arr.size, size=max_elements, replace=False)
        base = arr.value
        numeric = np.zeros(max_elements)
        work = base.copy()
        try:
            for k, i in enumerate(idx):
                orig = work.flat[i]
                work.flat[i] = orig + h
                arr.value = work.copy()
                fp = scalar()
                work.flat[i] = orig - h
                arr.value = work.copy()
                fm = scalar()
                work.flat[i] = orig
                numeric[k] = (fp - fm) / (2 * h)
        finally:
            arr.value = base
        pairs[name] = (analytic.reshape(-1)[idx], numeric)
    if scale is None:
        scale = max((float(np.abs(n).max(initial=0.0)) for _, n in pairs.values()), default=0.0)
    return {name: float(relative_error(a, n, scale).max(initial=0.0)) for name, (a, n) in pairs.items()}
