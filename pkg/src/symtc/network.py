"""TC modules and the SymTC encoder-decoder."""

from __future__ import annotations

import numpy as np

from . import ndgrad as nd
from .attention import RpeParams, rmha_output
from .config import NetworkConfig, TcModuleConfig
from .ndgrad import DiffArray, Rng
from .nn import Conv2d, ConvTranspose2d, GroupNorm, LayerNorm, Linear, Module


def patch_positions(h: int, w: int) -> np.ndarray:
    """Row-major patch-center coordinates (x, y), each normalized to [-1, 1]."""
    ys = (2.0 * np.arange(h) + 1.0) / h - 1.0
    xs = (2.0 * np.arange(w) + 1.0) / w - 1.0
    gy, gx = np.meshgrid(ys, xs, indexing="ij")
    return np.stack([gx.ravel(), gy.ravel()], axis=1)


class ConvBlock(Module):
    """conv -> group norm -> ReLU."""

    def __init__(self, cin, cout, kernel, rng, stride=1, padding="same", padding_mode="zeros"):
        self.conv = Conv2d(cin, cout, kernel, rng, stride=stride, padding=padding, padding_mode=padding_mode)
        self.norm = GroupNorm(cout)

    def __call__(self, x):
        return nd.relu(self.norm(self.conv(x)))


class CnnPath(Module):
    """Residual block 5x5 -> 1x1 -> 3x3 with an identity or 1x1-projected shortcut."""

    def __init__(self, cin: int, cout: int, rng: Rng, padding_mode: str = "zeros"):
        self.conv5 = Conv2d(cin, cout, 5, rng, padding_mode=padding_mode)
        self.norm5 = GroupNorm(cout)
        self.conv1 = Conv2d(cout, cout, 1, rng)
        self.norm1 = GroupNorm(cout)
        self.conv3 = Conv2d(cout, cout, 3, rng, padding_mode=padding_mode)
        self.norm3 = GroupNorm(cout)
        self.shortcut = None if cin == cout else Conv2d(cin, cout, 1, rng)
        self.cin = cin

    def __call__(self, f):
        f = nd.as_array(f)
        if f.shape[1] != self.cin:
            raise nd.ShapeError("cnn_path", f.shape, (self.cin,), detail="channel count")
        h = nd.relu(self.norm5(self.conv5(f)))
        h = nd.relu(self.norm1(self.conv1(h)))
        h = self.norm3(self.conv3(h))
        skip = f if self.shortcut is None else self.shortcut(f)
        return nd.relu(h + skip)


class TransformerBlock(Module):
    """Pre-norm relative-position attention and feed-forward, each with a residual."""

    def __init__(self, dim: int, heads: int, rng: Rng, qk_mode="mlp", position_params="shared",
                 position_term="per_head"):
        self.norm1 = LayerNorm(dim)
        self.attn = RpeParams(dim, heads, rng, qk_mode=qk_mode, position_params=position_params,
                              position_term=position_term)
        self.norm2 = LayerNorm(dim)
        self.ff1 = Linear(dim, 4 * dim, rng)
        self.ff2 = Linear(4 * dim, dim, rng)

    def __call__(self, x, p):
        x = x + rmha_output(self.norm1(x), p, self.attn)
        return x + self.ff2(nd.relu(self.ff1(self.norm2(x))))


class TransformerPath(Module):
    """Conv patch embedding -> L transformer blocks -> transposed-conv un-patching."""

    def __init__(self, cin: int, cout: int, cfg: TcModuleConfig, rng: Rng):
        p, e = cfg.patch_size, cfg.embed_dim
        self.patch_size = p
        self.embed = Conv2d(cin, e, p, rng, stride=p, padding=0)
        self.blocks = [TransformerBlock(e, cfg.heads, rng, cfg.qk_mode, cfg.position_params, cfg.position_term)
                       for _ in range(cfg.layers)]
        self.norm = LayerNorm(e)
        self.unpatch = ConvTranspose2d(e, cout, p, rng, stride=p)

    def tokens(self, f) -> tuple[DiffArray, np.ndarray]:
        f = nd.as_array(f)
        N, _, H, W = f.shape
        p = self.patch_size
        if H % p or W % p:
            raise nd.ShapeError("transformer_path", f.shape, (p, p), detail="extent not divisible by patch")
        g = self.embed(f)
        h, w = g.shape[2:]
        x = nd.transpose(nd.reshape(g, (N, g.shape[1], h * w)), (0, 2, 1))
        return x, patch_positions(h, w)

    def __call__(self, f):
        f = nd.as_array(f)
        N, _, H, W = f.shape
        x, pos = self.tokens(f)
        for blk in self.blocks:
            x = blk(x, pos)
        x = self.norm(x)
        h, w = H // self.patch_size, W // self.patch_size
        grid = nd.reshape(nd.transpose(x, (0, 2, 1)), (N, x.shape[2], h, w))
        return self.unpatch(grid)


class TCModule(Module):
    """Parallel CNN and Transformer paths, concatenated, normalized and rectified.

    A disabled path contributes a block of zero channels, so the output width and
    the norm are the same in every ablation and disabling a path removes exactly
    that path's parameters.
    """

    def __init__(self, cfg: TcModuleConfig, rng: Rng | int = 0, padding_mode: str = "zeros"):
        cfg.validate()
        rng = rng if isinstance(rng, Rng) else Rng(rng)
        self.cfg = cfg
        c_cnn, c_tr = cfg.path_channels
        self.cnn = CnnPath(cfg.in_channels, c_cnn, rng, padding_mode) if cfg.enable_cnn else None
        self.transformer = TransformerPath(cfg.in_channels, c_tr, cfg, rng) \
            if cfg.enable_transformer and c_tr > 0 else None
        self.norm = GroupNorm(cfg.out_channels)

    def __call__(self, f):
        f = nd.as_array(f)
        if f.shape[1] != self.cfg.in_channels:
            raise nd.ShapeError("tc_module", f.shape, (self.cfg.in_channels,), detail="channel count")
        N, _, H, W = f.shape
        c_cnn, c_tr = self.cfg.path_channels
        parts = []
        for path, width in ((self.cnn, c_cnn), (self.transformer, c_tr)):
            if width == 0:
                continue
            parts.append(path(f) if path is not None else np.zeros((N, width, H, W)))
        return nd.relu(self.norm(nd.concat(parts, axis=1)))


class MergeModule(Module):
    """concat(encoder, decoder) -> 1x1 conv -> group norm -> ReLU."""

    def __init__(self, ca: int, cb: int, cout: int, rng: Rng):
        self.conv = Conv2d(ca + cb, cout, 1, rng)
        self.norm = GroupNorm(cout)

    def __call__(self, a, b):
        a, b = nd.as_array(a), nd.as_array(b)
        if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
            raise nd.ShapeError("merge_module", a.shape, b.shape, detail="spatial sizes differ")
        return nd.relu(self.norm(self.conv(nd.concat([a, b], axis=1))))


class UpBlock(Module):
    def __init__(self, cin: int, cout: int, factor: int, rng: Rng, mode: str = "transposed",
                 padding_mode: str = "zeros"):
        self.mode = mode
        self.factor = factor
        if mode == "transposed":
            self.conv = ConvTranspose2d(cin, cout, factor, rng, stride=factor)
        else:
            self.conv = Conv2d(cin, cout, 3, rng, padding_mode=padding_mode)
        self.norm = GroupNorm(cout)

    def __call__(self, x):
        x = nd.as_array(x)
        if self.mode == "nearest":
            x = nd.resize(x, (x.shape[2] * self.factor, x.shape[3] * self.factor), mode="nearest")
        return nd.relu(self.norm(self.conv(x)))


class SymTC(Module):
    """U-shaped segmentation network with TC modules at every encoder level.

    stem -> TCM-0 (A1) -> down -> TCM-1 (A2) -> down -> TCM-2 (A3);
    B3 = conv(A3); M3 = merge(A3, B3); B2 = up(M3); M2 = merge(A2, B2); ...;
    refine TCM on M1 -> 1x1 segmentation head.
    """

    def __init__(self, cfg: NetworkConfig, seed: int = 0):
        cfg.validate()
        self.cfg = cfg
        rng = Rng(seed)
        pm = cfg.padding_mode
        ch, st = cfg.channels, cfg.strides
        self.stem = ConvBlock(cfg.in_channels, ch[0], 3, rng, padding_mode=pm)
        self.encoder = [TCModule(cfg.encoder_tcms[0], rng, pm)]
        self.down = []
        for lvl in range(1, len(ch)):
            r = st[lvl] // st[lvl - 1]
            self.down.append(ConvBlock(ch[lvl - 1], ch[lvl], r, rng, stride=r, padding=0))
            self.encoder.append(TCModule(cfg.encoder_tcms[lvl], rng, pm))
        self.bottleneck = ConvBlock(ch[-1], ch[-1], 3, rng, padding_mode=pm)
        self.merges = [MergeModule(c, c, c, rng) for c in ch]
        self.up = [UpBlock(ch[lvl + 1], ch[lvl], st[lvl + 1] // st[lvl], rng, cfg.upsample, pm)
                   for lvl in range(len(ch) - 1)]
        self.refine = TCModule(cfg.refine_tcm, rng, pm) if cfg.refine_tcm is not None else None
        self.head = Conv2d(ch[0], cfg.class_count, 1, rng)

    def __call__(self, images) -> DiffArray:
        """(N, C_in, H, W) images -> (N, class_count, H, W) logits."""
        x = nd.as_array(images)
        H, W = self.cfg.input_size
        if x.ndim != 4 or x.shape[1] != self.cfg.in_channels or x.shape[2:] != (H, W):
            raise nd.ShapeError("symtc_forward", x.shape, (None, self.cfg.in_channels, H, W))
        feats = []
        h = self.encoder[0](self.stem(x))
        feats.append(h)
        for down, enc in zip(self.down, self.encoder[1:]):
            h = enc(down(h))
            feats.append(h)
        m = self.merges[-1](feats[-1], self.bottleneck(feats[-1]))
        for lvl in range(len(feats) - 2, -1, -1):
            m = self.merges[lvl](feats[lvl], self.up[lvl](m))
        if self.refine is not None:
            m = self.refine(m)
        return self.head(m)

    def predict_proba(self, images) -> np.ndarray:
        return nd.softmax(self(images), axis=1).value


def symtc_forward(model: SymTC, images) -> tuple[DiffArray, DiffArray]:
    """Logits and per-pixel class probabilities."""
    logits = model(images)
    return logits, nd.softmax(logits, axis=1)


def param_count(cfg: NetworkConfig | TcModuleConfig) -> int:
    """Exact number of trainable scalars for a network or a single TC module."""
    if isinstance(cfg, TcModuleConfig):
        return TCModule(cfg).param_count()
    return SymTC(cfg).param_count()
