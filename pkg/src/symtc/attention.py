"""Multi-head self-attention with compound sinusoidal relative position embedding.

Token content ``x`` has shape ``(..., n, d_model)`` and positions ``p`` have
shape ``(..., n, 2)`` (normalized patch-center coordinates). Per head, queries
and keys stack four blocks::

    q_i = [c_i*cos(p_i W1 + b1), c_i*sin(p_i W1 + b1), c_i*cos(p_i W2 + b2), c_i*sin(p_i W2 + b2)]
    k_j = [e_j*cos(p_j W1),      e_j*sin(p_j W1),      cos(p_j W2),           sin(p_j W2)]

with ``c_i`` / ``e_j`` the content query / key of each token. By the angle
difference identities ``q_i . k_j`` equals::

    sum(c_i*e_j*cos((p_i - p_j) W1 + b1) + c_i*cos((p_i - p_j) W2 + b2))

so attention logits only see relative positions. Logits are divided by
``sqrt(d_head)``. The output adds a position term to the usual value mixing::

    out_i = Linear_content(concat_h(A_i V)) + Linear_position(concat_h(sum_j a_ij (p_i - p_j)))
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ndgrad as nd
from .ndgrad import DiffArray, Parameter, Rng
from .nn import Linear, Module, uniform_init


@dataclass
class TokenSet:
    """Token matrix ``x`` (n, d_model) with positions ``p`` (n, 2)."""

    x: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.p = np.asarray(self.p, dtype=np.float64)
        if self.x.ndim != 2 or self.x.shape[0] < 1:
            raise ValueError(f"token matrix must be (n>=1, d), got {self.x.shape}")
        if self.p.shape != (self.x.shape[0], 2):
            raise ValueError(f"positions must be ({self.x.shape[0]}, 2), got {self.p.shape}")
        if not (np.isfinite(self.x).all() and np.isfinite(self.p).all()):
            raise ValueError("tokens and positions must be finite")

    def __iter__(self):
        return iter((self.x, self.p))

    def shifted(self, delta) -> "TokenSet":
        return TokenSet(self.x, self.p + np.asarray(delta, dtype=np.float64))


def split_heads(y, heads: int) -> DiffArray:
    """(..., n, H*dh) -> (..., H, n, dh)."""
    y = nd.as_array(y)
    *lead, n, d = y.shape
    y = nd.reshape(y, (*lead, n, heads, d // heads))
    nd_ = y.ndim
    axes = list(range(nd_ - 3)) + [nd_ - 2, nd_ - 3, nd_ - 1]
    return nd.transpose(y, axes)


def merge_heads(y) -> DiffArray:
    """(..., H, n, dh) -> (..., n, H*dh)."""
    y = nd.as_array(y)
    *lead, h, n, dh = y.shape
    nd_ = y.ndim
    axes = list(range(nd_ - 3)) + [nd_ - 2, nd_ - 3, nd_ - 1]
    return nd.reshape(nd.transpose(y, axes), (*lead, n, h * dh))


class _HeadMlp(Module):
    """Per-head two-layer MLP: d_model -> d_head (ReLU) -> d_head."""

    def __init__(self, d_model: int, heads: int, rng: Rng):
        dh = d_model // heads
        self.hidden = Linear(d_model, d_model, rng)
        self.weight = Parameter(uniform_init(rng, (heads, dh, dh), dh))
        self.bias = Parameter(np.zeros((heads, 1, dh)))
        self.heads = heads

    def __call__(self, x):
        h = split_heads(nd.relu(self.hidden(x)), self.heads)
        return nd.matmul(h, self.weight) + self.bias


class RpeParams(Module):
    """Trainable state of one relative-position attention layer.

    ``qk_mode`` selects per-head MLPs (default) or plain bias-free linear maps
    for the content query/key. ``position_params="per_head"`` gives each head its
    own frequency maps and phases; ``position_term="global"`` aggregates relative
    positions with head-averaged scores instead of per head.
    """

    def __init__(self, d_model: int, heads: int, rng: Rng | int = 0, qk_mode: str = "mlp",
                 position_params: str = "shared", position_term: str = "per_head",
                 freq_std: float = 3.0):
        if d_model % heads:
            raise ValueError(f"d_model={d_model} not divisible by heads={heads}")
        if qk_mode not in ("mlp", "linear"):
            raise ValueError(f"unknown qk_mode {qk_mode!r}")
        if position_params not in ("shared", "per_head") or position_term not in ("per_head", "global"):
            raise ValueError("bad position option")
        rng = rng if isinstance(rng, Rng) else Rng(rng)
        self.d_model = d_model
        self.heads = heads
        self.d_head = d_model // heads
        self.qk_mode = qk_mode
        self.position_params = position_params
        self.position_term = position_term
        dh = self.d_head

        if qk_mode == "mlp":
            self.query = _HeadMlp(d_model, heads, rng)
            self.key = _HeadMlp(d_model, heads, rng)
        else:
            self.query = Parameter(uniform_init(rng, (d_model, d_model), d_model))
            self.key = Parameter(uniform_init(rng, (d_model, d_model), d_model))
        self.value = Parameter(uniform_init(rng, (d_model, d_model), d_model))

        fshape = (2, dh) if position_params == "shared" else (heads, 2, dh)
        pshape = (dh,) if position_params == "shared" else (heads, 1, dh)
        self.freq_1 = Parameter(rng.normal(fshape, std=freq_std))
        self.freq_2 = Parameter(rng.normal(fshape, std=freq_std))
        self.phase_1 = Parameter(np.zeros(pshape))
        self.phase_2 = Parameter(np.zeros(pshape))

        self.content_out = Linear(d_model, d_model, rng)
        n_pos = 2 * heads if position_term == "per_head" else 2
        self.position_out = Linear(n_pos, d_model, rng, zero=True)


def content_queries(x, params: RpeParams) -> DiffArray:
    if params.qk_mode == "mlp":
        return params.query(x)
    return split_heads(nd.matmul(x, params.query), params.heads)


def content_keys(x, params: RpeParams) -> DiffArray:
    if params.qk_mode == "mlp":
        return params.key(x)
    return split_heads(nd.matmul(x, params.key), params.heads)


def _phase(p, freq: DiffArray) -> DiffArray:
    """p W with a head axis: (..., n, 2) -> (..., 1 or H, n, dh)."""
    p = nd.as_array(p)
    p = nd.reshape(p, p.shape[:-2] + (1,) + p.shape[-2:])
    return nd.matmul(p, freq)


def _position_blocks(p, params: RpeParams):
    pw1 = _phase(p, params.freq_1)
    pw2 = _phase(p, params.freq_2)
    return pw1, pw2


def rpe_query(x, p, params: RpeParams) -> DiffArray:
    """Four stacked blocks per head: (..., H, n, 4*d_head)."""
    c = content_queries(x, params)
    pw1, pw2 = _position_blocks(p, params)
    a1 = pw1 + params.phase_1
    a2 = pw2 + params.phase_2
    return nd.concat([c * nd.cos(a1), c * nd.sin(a1), c * nd.cos(a2), c * nd.sin(a2)], axis=-1)


def rpe_key(x, p, params: RpeParams) -> DiffArray:
    """Four stacked blocks per head; blocks 3-4 carry no content factor."""
    e = content_keys(x, params)
    pw1, pw2 = _position_blocks(p, params)
    shape = e.shape
    return nd.concat([e * nd.cos(pw1), e * nd.sin(pw1),
                      nd.broadcast_to(nd.cos(pw2), shape), nd.broadcast_to(nd.sin(pw2), shape)], axis=-1)


def rpe_logits(x, p, params: RpeParams) -> DiffArray:
    q = rpe_query(x, p, params)
    k = rpe_key(x, p, params)
    return nd.matmul(q, nd.swapaxes(k, -1, -2)) * (1.0 / np.sqrt(params.d_head))


def rpe_scores(x, p, params: RpeParams) -> DiffArray:
    """Row-stochastic attention scores, (..., H, n, n)."""
    return nd.softmax(rpe_logits(x, p, params), axis=-1)


def rmha_output(x, p, params: RpeParams, return_scores: bool = False):
    """Attention output with the relative-position term, (..., n, d_model)."""
    x = nd.as_array(x)
    p = nd.as_array(p)
    scores = rpe_scores(x, p, params)
    v = split_heads(nd.matmul(x, params.value), params.heads)
    content = params.content_out(merge_heads(nd.matmul(scores, v)))

    # sum_j a_ij (p_i - p_j) = p_i - (A p)_i since rows of A sum to one
    if params.position_term == "per_head":
        p_h = nd.reshape(p, p.shape[:-2] + (1,) + p.shape[-2:])
        rel = p_h - nd.matmul(scores, p_h)  # (..., H, n, 2)
        rel = merge_heads(rel)  # (..., n, 2H)
    else:
        avg = nd.mean(scores, axis=-3)
        rel = p - nd.matmul(avg, p)
    out = content + params.position_out(rel)
    return (out, scores) if return_scores else out


# ------------------------------------------------------------------ per-pair forms


def rpe_dot_block(q_i: np.ndarray, k_j: np.ndarray) -> float:
    """dot(q_i, k_j) computed from the stacked block vectors."""
    return float(np.sum(np.asarray(q_i) * np.asarray(k_j)))


def _head_param(arr: DiffArray, head: int, per_head: bool) -> np.ndarray:
    v = arr.value[head] if per_head else arr.value
    return v[0] if v.ndim == 2 and v.shape[0] == 1 else v


def rpe_dot_closed(x_i, x_j, delta_p, params: RpeParams, head: int = 0) -> float:
    """The same dot product written as a function of ``delta_p = p_i - p_j``."""
    c = content_queries(nd.as_array(np.asarray(x_i, dtype=float)[None]), params).value[head, 0]
    e = content_keys(nd.as_array(np.asarray(x_j, dtype=float)[None]), params).value[head, 0]
    per = params.position_params == "per_head"
    w1 = _head_param(params.freq_1, head, per)
    w2 = _head_param(params.freq_2, head, per)
    b1 = _head_param(params.phase_1, head, per)
    b2 = _head_param(params.phase_2, head, per)
    dp = np.asarray(delta_p, dtype=float)
    return float(np.sum(c * e * np.cos(dp @ w1 + b1) + c * np.cos(dp @ w2 + b2)))


# ------------------------------------------------------------------ classic baseline


class ClassicParams(Module):
    """Bias-free Q/K/V projections plus an output linear layer."""

    def __init__(self, d_model: int, heads: int, rng: Rng | int = 0):
        if d_model % heads:
            raise ValueError(f"d_model={d_model} not divisible by heads={heads}")
        rng = rng if isinstance(rng, Rng) else Rng(rng)
        self.d_model = d_model
        self.heads = heads
        self.d_head = d_model // heads
        self.query = Parameter(uniform_init(rng, (d_model, d_model), d_model))
        self.key = Parameter(uniform_init(rng, (d_model, d_model), d_model))
        self.value = Parameter(uniform_init(rng, (d_model, d_model), d_model))
        self.out = Linear(d_model, d_model, rng)


def _with_position(x, additive_pos):
    x = nd.as_array(x)
    if additive_pos is None:
        return x
    additive_pos = nd.as_array(additive_pos)
    if additive_pos.shape != x.shape:
        raise nd.ShapeError("classic_mhsa", x.shape, additive_pos.shape, detail="position must match tokens")
    return x + additive_pos


def classic_scores(x, params: ClassicParams, additive_pos=None) -> DiffArray:
    z = _with_position(x, additive_pos)
    q = split_heads(nd.matmul(z, params.query), params.heads)
    k = split_heads(nd.matmul(z, params.key), params.heads)
    logits = nd.matmul(q, nd.swapaxes(k, -1, -2)) * (1.0 / np.sqrt(params.d_head))
    return nd.softmax(logits, axis=-1)


def classic_mhsa(x, params: ClassicParams, additive_pos=None) -> DiffArray:
    """softmax(Q K^T / sqrt(d_head)) V per head, heads concatenated then mixed."""
    z = _with_position(x, additive_pos)
    scores = classic_scores(x, params, additive_pos)
    v = split_heads(nd.matmul(z, params.value), params.heads)
    return params.out(merge_heads(nd.matmul(scores, v)))


def decomposition_terms(x, params: ClassicParams, additive_pos=None):
    """Content-content, content-position and position-position parts of Q K^T.

    Returned per head, each (..., H, n, n); their sum is the unscaled logit
    matrix of :func:`classic_scores`.
    """
    x = nd.as_array(x)
    if additive_pos is None:
        pos = nd.as_array(np.zeros(x.shape))
    else:
        pos = nd.as_array(additive_pos)
        if pos.shape != x.shape:
            raise nd.ShapeError("decomposition_terms", x.shape, pos.shape, detail="position must match tokens")
    h = params.heads
    xq = split_heads(nd.matmul(x, params.query), h)
    xk = split_heads(nd.matmul(x, params.key), h)
    pq = split_heads(nd.matmul(pos, params.query), h)
    pk = split_heads(nd.matmul(pos, params.key), h)
    t = lambda a: nd.swapaxes(a, -1, -2)  # noqa: E731
    content_content = nd.matmul(xq, t(xk))
    content_position = nd.matmul(pq, t(xk)) + nd.matmul(xq, t(pk))
    position_position = nd.matmul(pq, t(pk))
    return content_content, content_position, position_position
