"""Minimal dense n-d arrays with reverse-mode differentiation."""

from . import ops
from .gradcheck import check_gradients, numerical_gradient, relative_error
from .ops import (
    add,
    broadcast_to,
    clip,
    concat,
    conv2d,
    conv_transpose2d,
    cos,
    div,
    exp,
    getitem,
    grid_sample,
    group_norm,
    layer_norm,
    log,
    matmul,
    mean,
    mul,
    neg,
    pad2d,
    power,
    relu,
    reshape,
    resize,
    sin,
    softmax,
    sqrt,
    stack,
    sub,
    sum,
    swapaxes,
    transpose,
)
from .rng import Rng
from .tensor import (
    DiffArray,
    Gradients,
    NonFiniteError,
    Parameter,
    ShapeError,
    Tape,
    TapeError,
    active_tape,
    as_array,
)


def backward(tape: Tape, root: DiffArray) -> Gradients:
    return tape.backward(root)


__all__ = [name for name in dir() if not name.startswith("_")]
