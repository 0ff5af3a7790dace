"""Differentiable kernels.

Every public function takes ``DiffArray`` operands (numpy arrays and scalars
are promoted to constants), computes the forward value with numpy, and, when a
:class:`~symtc.ndgrad.tensor.Tape` is active and some operand requires
gradients, records a vector-Jacobian product for the reverse sweep.
"""

from __future__ import annotations

import builtins
from typing import Sequence

import numpy as np

from .tensor import DiffArray, NonFiniteError, ShapeError, active_tape, as_array


def _emit(op: str, value: np.ndarray, inputs: tuple[DiffArray, ...], vjp) -> DiffArray:
    value = np.asarray(value, dtype=np.float64)
    if not np.isfinite(value).all():
        raise NonFiniteError(op)
    out = DiffArray._wrap(value)
    tape = active_tape()
    if tape is not None and builtins.any(x.requires_grad for x in inputs):
        tape.record(op, out, inputs, vjp)
    return out


def unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _broadcast_shape(op: str, a: DiffArray, b: DiffArray) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, a.shape, b.shape, detail="not broadcastable") from None


# ---------------------------------------------------------------- elementwise


def add(a, b) -> DiffArray:
    a, b = as_array(a), as_array(b)
    _broadcast_shape("add", a, b)
    return _emit("add", a.value + b.value, (a, b),
                 lambda g: (unbroadcast(g, a.shape), unbroadcast(g, b.shape)))


def sub(a, b) -> DiffArray:
    a, b = as_array(a), as_array(b)
    _broadcast_shape("sub", a, b)
    return _emit("sub", a.value - b.value, (a, b),
                 lambda g: (unbroadcast(g, a.shape), unbroadcast(-g, b.shape)))


def mul(a, b) -> DiffArray:
    a, b = as_array(a), as_array(b)
    _broadcast_shape("mul", a, b)
    return _emit("mul", a.value * b.value, (a, b),
                 lambda g: (unbroadcast(g * b.value, a.shape), unbroadcast(g * a.value, b.shape)))


def div(a, b) -> DiffArray:
    a, b = as_array(a), as_array(b)
    _broadcast_shape("div", a, b)
    with np.errstate(divide="ignore", invalid="ignore"):
        v = a.value / b.value

    def vjp(g):
        return (unbroadcast(g / b.value, a.shape),
                unbroadcast(-g * a.value / (b.value * b.value), b.shape))

    return _emit("div", v, (a, b), vjp)


def neg(a) -> DiffArray:
    a = as_array(a)
    return _emit("neg", -a.value, (a,), lambda g: (-g,))


def power(a, exponent: float) -> DiffArray:
    a = as_array(a)
    p = float(exponent)
    with np.errstate(divide="ignore", invalid="ignore"):
        v = a.value ** p
    return _emit("power", v, (a,), lambda g: (g * p * a.value ** (p - 1.0),))


def sqrt(a) -> DiffArray:
    """Square root; the derivative at exactly 0 is taken as 0."""
    a = as_array(a)
    with np.errstate(invalid="ignore"):
        v = np.sqrt(a.value)

    def vjp(g):
        safe = np.where(v > 0, v, 1.0)
        return (np.where(v > 0, g / (2.0 * safe), 0.0),)

    return _emit("sqrt", v, (a,), vjp)


def sin(a) -> DiffArray:
    a = as_array(a)
    return _emit("sin", np.sin(a.value), (a,), lambda g: (g * np.cos(a.value),))


def cos(a) -> DiffArray:
    a = as_array(a)
    return _emit("cos", np.cos(a.value), (a,), lambda g: (-g * np.sin(a.value),))


def exp(a) -> DiffArray:
    a = as_array(a)
    with np.errstate(over="ignore"):
        v = np.exp(a.value)
    return _emit("exp", v, (a,), lambda g: (g * v,))


def log(a) -> DiffArray:
    a = as_array(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        v = np.log(a.value)
    return _emit("log", v, (a,), lambda g: (g / a.value,))


def relu(a) -> DiffArray:
    a = as_array(a)
    mask = a.value > 0
    return _emit("relu", np.where(mask, a.value, 0.0), (a,), lambda g: (g * mask,))


def clip(a, lo: float | None = None, hi: float | None = None) -> DiffArray:
    """Clamp values; the gradient is zero wherever the clamp is active."""
    a = as_array(a)
    v = np.clip(a.value, lo, hi)
    mask = np.ones(a.shape, dtype=bool)
    if lo is not None:
        mask &= a.value >= lo
    if hi is not None:
        mask &= a.value <= hi
    return _emit("clip", v, (a,), lambda g: (g * mask,))


# ---------------------------------------------------------------- linear algebra


def matmul(a, b) -> DiffArray:
    a, b = as_array(a), as_array(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul", a.shape, b.shape, detail="operands must be at least 2-D")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul", a.shape, b.shape, detail="inner dimensions differ")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeError("matmul", a.shape, b.shape, detail="batch dims not broadcastable") from None

    def vjp(g):
        ga = g @ np.swapaxes(b.value, -1, -2)
        gb = np.swapaxes(a.value, -1, -2) @ g
        return unbroadcast(ga, a.shape), unbroadcast(gb, b.shape)

    return _emit("matmul", a.value @ b.value, (a, b), vjp)


# ---------------------------------------------------------------- structure


def reshape(a, shape: Sequence[int]) -> DiffArray:
    a = as_array(a)
    try:
        v = a.value.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", a.shape, tuple(shape)) from None
    return _emit("reshape", v, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes: Sequence[int] | None = None) -> DiffArray:
    a = as_array(a)
    axes = tuple(range(a.ndim))[::-1] if axes is None else tuple(axes)
    inv = tuple(np.argsort(axes))
    return _emit("transpose", a.value.transpose(axes), (a,), lambda g: (g.transpose(inv),))


def swapaxes(a, i: int, j: int) -> DiffArray:
    a = as_array(a)
    axes = list(range(a.ndim))
    axes[i], axes[j] = axes[j], axes[i]
    return transpose(a, axes)


def broadcast_to(a, shape: Sequence[int]) -> DiffArray:
    a = as_array(a)
    try:
        v = np.broadcast_to(a.value, tuple(shape))
    except ValueError:
        raise ShapeError("broadcast_to", a.shape, tuple(shape)) from None
    return _emit("broadcast_to", np.ascontiguousarray(v), (a,), lambda g: (unbroadcast(g, a.shape),))


def concat(arrays: Sequence, axis: int = 0) -> DiffArray:
    arrs = tuple(as_array(x) for x in arrays)
    try:
        v = np.concatenate([x.value for x in arrs], axis=axis)
    except ValueError:
        raise ShapeError("concat", *(x.shape for x in arrs), detail=f"axis={axis}") from None
    bounds = np.cumsum([x.shape[axis] for x in arrs])[:-1]

    def vjp(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _emit("concat", v, arrs, vjp)


def stack(arrays: Sequence, axis: int = 0) -> DiffArray:
    arrs = [as_array(x) for x in arrays]
    ax = axis if axis >= 0 else arrs[0].ndim + 1 + axis
    expanded = [reshape(x, x.shape[:ax] + (1,) + x.shape[ax:]) for x in arrs]
    return concat(expanded, axis=ax)


def _is_basic_index(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return builtins.all(
        isinstance(i, (int, np.integer, slice)) or i is None or i is Ellipsis for i in items
    )


def getitem(a, index) -> DiffArray:
    a = as_array(a)
    if isinstance(index, DiffArray):
        raise TypeError("index with a numpy array, not a DiffArray")
    v = a.value[index]
    basic = _is_basic_index(index)

    def vjp(g):
        full = np.zeros(a.shape)
        if basic:
            full[index] = g
        else:
            np.add.at(full, index, g)
        return (full,)

    return _emit("getitem", np.array(v, dtype=np.float64), (a,), vjp)


def pad2d(x, pads: tuple[int, int, int, int], mode: str = "zeros") -> DiffArray:
    """Pad the last two axes by (top, bottom, left, right); mode ``zeros`` or ``circular``."""
    x = as_array(x)
    top, bottom, left, right = (int(p) for p in pads)
    if min(pads) < 0:
        raise ValueError(f"negative padding {pads}")
    if top == bottom == left == right == 0:
        return x
    H, W = x.shape[-2:]
    width = [(0, 0)] * (x.ndim - 2) + [(top, bottom), (left, right)]
    if mode == "zeros":
        v = np.pad(x.value, width)
    elif mode == "circular":
        if builtins.max(top, bottom) > H or builtins.max(left, right) > W:
            raise ShapeError("pad2d", x.shape, pads, detail="circular pad wider than input")
        v = np.pad(x.value, width, mode="wrap")
    else:
        raise ValueError(f"unknown padding mode {mode!r}")

    def fold(g, axis, before, after, n):
        core = g.take(np.arange(before, before + n), axis=axis).copy()
        if mode == "circular":
            if before:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(n - before, n)
                src = [slice(None)] * g.ndim
                src[axis] = slice(0, before)
                core[tuple(idx)] += g[tuple(src)]
            if after:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(0, after)
                src = [slice(None)] * g.ndim
                src[axis] = slice(before + n, before + n + after)
                core[tuple(idx)] += g[tuple(src)]
        return core

    def vjp(g):
        g = fold(g, g.ndim - 2, top, bottom, H)
        g = fold(g, g.ndim - 1, left, right, W)
        return (g,)

    return _emit("pad2d", v, (x,), vjp)


# ---------------------------------------------------------------- reductions


def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(ax % ndim for ax in axis))


def sum(a, axis=None, keepdims: bool = False) -> DiffArray:
    a = as_array(a)
    axes = _norm_axis(axis, a.ndim)
    v = a.value.sum(axis=axes, keepdims=keepdims)

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _emit("sum", v, (a,), vjp)


def mean(a, axis=None, keepdims: bool = False) -> DiffArray:
    a = as_array(a)
    axes = _norm_axis(axis, a.ndim)
    count = int(np.prod([a.shape[i] for i in axes])) if axes else 1
    return sum(a, axis=axes, keepdims=keepdims) * (1.0 / count)


def softmax(a, axis: int = -1) -> DiffArray:
    """Softmax with max-subtraction for stability."""
    a = as_array(a)
    shifted = a.value - a.value.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _emit("softmax", y, (a,), vjp)


def standardize(a, eps: float = 1e-5) -> DiffArray:
    """(a - mean) / sqrt(var + eps) over the last axis."""
    a = as_array(a)
    mu = a.value.mean(axis=-1, keepdims=True)
    xc = a.value - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    y = xc * inv

    def vjp(g):
        gm = g.mean(axis=-1, keepdims=True)
        gy = (g * y).mean(axis=-1, keepdims=True)
        return (inv * (g - gm - y * gy),)

    return _emit("standardize", y, (a,), vjp)


def layer_norm(x, gamma=None, beta=None, eps: float = 1e-5) -> DiffArray:
    y = standardize(x, eps)
    if gamma is not None:
        y = y * gamma
    if beta is not None:
        y = y + beta
    return y


def group_norm(x, groups: int, gamma=None, beta=None, eps: float = 1e-5) -> DiffArray:
    """Group normalization of an (N, C, H, W) array."""
    x = as_array(x)
    N, C = x.shape[:2]
    if C % groups:
        raise ShapeError("group_norm", x.shape, (groups,), detail="channels not divisible by groups")
    y = standardize(reshape(x, (N, groups, -1)), eps)
    y = reshape(y, x.shape)
    bshape = (1, C) + (1,) * (x.ndim - 2)
    if gamma is not None:
        y = y * reshape(gamma, bshape)
    if beta is not None:
        y = y + reshape(beta, bshape)
    return y


# ---------------------------------------------------------------- convolution


def _pair(v) -> tuple[int, int]:
    if isinstance(v, (tuple, list)):
        return int(v[0]), int(v[1])
    return int(v), int(v)


def conv2d_valid(x, w, stride=1, dilation=1) -> DiffArray:
    """Unpadded 2-D cross-correlation of (N, C, H, W) with (O, C, kh, kw)."""
    x, w = as_array(x), as_array(w)
    if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[1]:
        raise ShapeError("conv2d", x.shape, w.shape)
    sh, sw = _pair(stride)
    dh, dw = _pair(dilation)
    N, C, H, W = x.shape
    O, _, kh, kw = w.shape
    Ho = (H - dh * (kh - 1) - 1) // sh + 1
    Wo = (W - dw * (kw - 1) - 1) // sw + 1
    if Ho < 1 or Wo < 1:
        raise ShapeError("conv2d", x.shape, w.shape, detail="kernel larger than input")
    xv, wv = x.value, w.value

    # patchify fast path: non-overlapping windows that tile the input exactly
    if (kh, kw) == (sh, sw) and dh == dw == 1 and H == Ho * kh and W == Wo * kw:
        blocks = xv.reshape(N, C, Ho, kh, Wo, kw)
        out = np.einsum("nchpwq,ocpq->nohw", blocks, wv, optimize=True)

        def vjp(g):
            gx = np.einsum("nohw,ocpq->nchpwq", g, wv, optimize=True).reshape(x.shape)
            gw = np.einsum("nohw,nchpwq->ocpq", g, blocks, optimize=True)
            return gx, gw

        return _emit("conv2d", out, (x, w), vjp)

    def window(ky, kx):
        return (slice(None), slice(None),
                slice(ky * dh, ky * dh + sh * (Ho - 1) + 1, sh),
                slice(kx * dw, kx * dw + sw * (Wo - 1) + 1, sw))

    out = np.zeros((N, Ho, Wo, O))
    for ky in range(kh):
        for kx in range(kw):
            out += np.tensordot(xv[window(ky, kx)], wv[:, :, ky, kx], axes=([1], [1]))
    out = np.ascontiguousarray(out.transpose(0, 3, 1, 2))

    def vjp(g):
        gx = np.zeros(x.shape)
        gw = np.zeros(w.shape)
        g_nhwo = g.transpose(0, 2, 3, 1)
        for ky in range(kh):
            for kx in range(kw):
                win = window(ky, kx)
                patch = xv[win]  # (N, C, Ho, Wo)
                gw[:, :, ky, kx] = np.tensordot(g, patch, axes=([0, 2, 3], [0, 2, 3]))
                gx[win] += np.tensordot(g_nhwo, wv[:, :, ky, kx], axes=([3], [0])).transpose(0, 3, 1, 2)
        return gx, gw

    return _emit("conv2d", out, (x, w), vjp)


def same_padding(kernel: int, dilation: int = 1) -> tuple[int, int]:
    total = dilation * (kernel - 1)
    return total // 2, total - total // 2


def conv2d(x, w, b=None, stride=1, padding="same", dilation=1, padding_mode: str = "zeros") -> DiffArray:
    """2-D convolution with optional bias.

    ``padding`` is ``"same"`` (stride-1 output keeps the input size), an int,
    or a (top, bottom, left, right) tuple.
    """
    x, w = as_array(x), as_array(w)
    if w.ndim != 4:
        raise ShapeError("conv2d", x.shape, w.shape, detail="weight must be (O, C, kh, kw)")
    dh, dw = _pair(dilation)
    if padding == "same":
        t, btm = same_padding(w.shape[2], dh)
        l, r = same_padding(w.shape[3], dw)
        pads = (t, btm, l, r)
    elif isinstance(padding, (tuple, list)) and len(padding) == 4:
        pads = tuple(int(p) for p in padding)
    else:
        ph, pw = _pair(padding)
        pads = (ph, ph, pw, pw)
    y = conv2d_valid(pad2d(x, pads, padding_mode), w, stride=stride, dilation=dilation)
    if b is not None:
        y = y + reshape(b, (1, -1, 1, 1))
    return y


def conv_transpose2d(x, w, b=None, stride=1, padding: int = 0) -> DiffArray:
    """Transposed convolution of (N, Ci, H, W) with weight (Ci, O, kh, kw).

    Output extent is ``(H - 1) * stride + kh - 2 * padding``.
    """
    x, w = as_array(x), as_array(w)
    if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[0]:
        raise ShapeError("conv_transpose2d", x.shape, w.shape)
    sh, sw = _pair(stride)
    N, Ci, H, W = x.shape
    _, O, kh, kw = w.shape
    Hf, Wf = (H - 1) * sh + kh, (W - 1) * sw + kw
    xv, wv = x.value, w.value

    if (kh, kw) == (sh, sw):
        out = np.einsum("nchw,copq->nohpwq", xv, wv, optimize=True).reshape(N, O, Hf, Wf)

        def vjp(g):
            gb = g.reshape(N, O, H, kh, W, kw)
            gx = np.einsum("nohpwq,copq->nchw", gb, wv, optimize=True)
            gw = np.einsum("nohpwq,nchw->copq", gb, xv, optimize=True)
            return gx, gw
    else:
        def window(ky, kx):
            return (slice(None), slice(None),
                    slice(ky, ky + sh * (H - 1) + 1, sh), slice(kx, kx + sw * (W - 1) + 1, sw))

        out = np.zeros((N, O, Hf, Wf))
        for ky in range(kh):
            for kx in range(kw):
                out[window(ky, kx)] += np.einsum("nchw,co->nohw", xv, wv[:, :, ky, kx], optimize=True)

        def vjp(g):
            gx = np.zeros(x.shape)
            gw = np.zeros(w.shape)
            for ky in range(kh):
                for kx in range(kw):
                    gwin = g[window(ky, kx)]
                    gx += np.einsum("nohw,co->nchw", gwin, wv[:, :, ky, kx], optimize=True)
                    gw[:, :, ky, kx] = np.einsum("nohw,nchw->co", gwin, xv, optimize=True)
            return gx, gw

    y = _emit("conv_transpose2d", out, (x, w), vjp)
    if padding:
        p = int(padding)
        y = getitem(y, (slice(None), slice(None), slice(p, Hf - p), slice(p, Wf - p)))
    if b is not None:
        y = y + reshape(b, (1, -1, 1, 1))
    return y


# ---------------------------------------------------------------- resampling


def interp_matrix(n_in: int, n_out: int, mode: str) -> np.ndarray:
    """Row-stochastic (n_out, n_in) matrix for 1-D resizing (half-pixel centers)."""
    m = np.zeros((n_out, n_in))
    src = (np.arange(n_out) + 0.5) * n_in / n_out - 0.5
    if mode == "nearest":
        idx = np.clip(np.floor((np.arange(n_out) + 0.5) * n_in / n_out), 0, n_in - 1).astype(int)
        m[np.arange(n_out), idx] = 1.0
    elif mode == "bilinear":
        src = np.clip(src, 0, n_in - 1)
        i0 = np.floor(src).astype(int)
        i1 = np.minimum(i0 + 1, n_in - 1)
        t = src - i0
        np.add.at(m, (np.arange(n_out), i0), 1.0 - t)
        np.add.at(m, (np.arange(n_out), i1), t)
    else:
        raise ValueError(f"unknown resize mode {mode!r}")
    return m


def resize(x, size: tuple[int, int], mode: str = "bilinear") -> DiffArray:
    """Resize the last two axes to ``size`` (nearest or bilinear, edge-clamped)."""
    x = as_array(x)
    Ho, Wo = size
    ry = interp_matrix(x.shape[-2], Ho, mode)
    rx = interp_matrix(x.shape[-1], Wo, mode)
    v = ry @ x.value @ rx.T

    def vjp(g):
        return (ry.T @ g @ rx,)

    return _emit("resize", v, (x,), vjp)


def _bilinear_setup(H: int, W: int, xs: np.ndarray, ys: np.ndarray):
    xc = np.clip(xs, 0.0, W - 1.0)
    yc = np.clip(ys, 0.0, H - 1.0)
    x0 = np.floor(xc).astype(np.intp)
    y0 = np.floor(yc).astype(np.intp)
    x1 = np.minimum(x0 + 1, W - 1)
    y1 = np.minimum(y0 + 1, H - 1)
    tx = xc - x0
    ty = yc - y0
    inside_x = (xs >= 0.0) & (xs <= W - 1.0)
    inside_y = (ys >= 0.0) & (ys <= H - 1.0)
    return x0, x1, y0, y1, tx, ty, inside_x, inside_y


def bilinear_sample(img: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Sample an (..., H, W) array at pixel coordinates with clamp-to-edge (no tape)."""
    H, W = img.shape[-2:]
    x0, x1, y0, y1, tx, ty, _, _ = _bilinear_setup(H, W, xs, ys)
    v00 = img[..., y0, x0]
    v01 = img[..., y0, x1]
    v10 = img[..., y1, x0]
    v11 = img[..., y1, x1]
    top = v00 * (1.0 - tx) + v01 * tx
    bot = v10 * (1.0 - tx) + v11 * tx
    return top * (1.0 - ty) + bot * ty


def grid_sample(img, coords) -> DiffArray:
    """Backward-warp sampling.

    ``img`` is (N, C, H, W); ``coords`` is (N, Ho, Wo, 2) holding (x, y) pixel
    coordinates into ``img`` (pixel centers at integers). Bilinear, clamp-to-edge;
    the coordinate gradient vanishes where the clamp is active.
    """
    img, coords = as_array(img), as_array(coords)
    if img.ndim != 4 or coords.ndim != 4 or coords.shape[-1] != 2 or coords.shape[0] != img.shape[0]:
        raise ShapeError("grid_sample", img.shape, coords.shape)
    N, C, H, W = img.shape
    iv = img.value
    xs, ys = coords.value[..., 0], coords.value[..., 1]
    x0, x1, y0, y1, tx, ty, inx, iny = _bilinear_setup(H, W, xs, ys)
    n = np.arange(N)[:, None, None]

    def gather(yy, xx):
        return iv[n, :, yy, xx]  # (N, Ho, Wo, C)

    v00, v01, v10, v11 = gather(y0, x0), gather(y0, x1), gather(y1, x0), gather(y1, x1)
    txe, tye = tx[..., None], ty[..., None]
    out = (v00 * (1 - txe) + v01 * txe) * (1 - tye) + (v10 * (1 - txe) + v11 * txe) * tye

    def vjp(g):
        g = g.transpose(0, 2, 3, 1)  # (N, Ho, Wo, C)
        gimg = np.zeros((N, H, W, C))
        for yy, xx, wgt in ((y0, x0, (1 - tx) * (1 - ty)), (y0, x1, tx * (1 - ty)),
                            (y1, x0, (1 - tx) * ty), (y1, x1, tx * ty)):
            np.add.at(gimg, (np.broadcast_to(n, yy.shape), yy, xx), g * wgt[..., None])
        dx = ((v01 - v00) * (1 - tye) + (v11 - v10) * tye)
        dy = ((v10 - v00) * (1 - txe) + (v11 - v01) * txe)
        gx = (g * dx).sum(-1) * inx
        gy = (g * dy).sum(-1) * iny
        return gimg.transpose(0, 3, 1, 2), np.stack([gx, gy], axis=-1)

    return _emit("grid_sample", out.transpose(0, 3, 1, 2), (img, coords), vjp)
