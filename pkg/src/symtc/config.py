"""Network, loss and run configuration with JSON (de)serialization.

Every configuration object round-trips through plain dicts. Loading goes
through a JSON schema that rejects unknown keys, so a typo in a
hyperparameter name is an error rather than a silent default.
"""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field, replace

import jsonschema

from .shapes.shape import LUMBAR_OBJECTS  # noqa: F401  (re-export)


class ConfigError(ValueError):
    pass


@dataclass
class TcModuleConfig:
    in_channels: int
    out_channels: int
    patch_size: int
    layers: int = 2
    embed_dim: int = 32
    heads: int = 4
    enable_cnn: bool = True
    enable_transformer: bool = True
    qk_mode: str = "mlp"
    position_params: str = "shared"
    position_term: str = "per_head"

    def validate(self) -> "TcModuleConfig":
        if not (self.enable_cnn or self.enable_transformer):
            raise ConfigError("TC module needs at least one enabled path")
        if min(self.in_channels, self.out_channels, self.patch_size) < 1:
            raise ConfigError(f"non-positive size in {self}")
        if self.enable_transformer:
            if self.embed_dim % self.heads:
                raise ConfigError(f"embed_dim {self.embed_dim} not divisible by heads {self.heads}")
            if self.layers < 0:
                raise ConfigError("layers must be >= 0")
        return self

    @property
    def path_channels(self) -> tuple[int, int]:
        """Output widths of the (CNN, Transformer) paths; fixed whether or not a path is enabled."""
        cnn = (self.out_channels + 1) // 2
        return cnn, self.out_channels - cnn


@dataclass
class NetworkConfig:
    """SymTC topology.

    ``channels``/``strides`` describe the encoder levels (1 to 3 of them).
    ``encoder_tcms`` holds one TC module per level; ``refine_tcm`` runs on the
    merged full-resolution feature before the segmentation head and may be
    ``None``.
    """

    input_size: tuple[int, int] = (64, 64)
    in_channels: int = 1
    class_count: int = 12
    channels: tuple[int, ...] = (8, 16, 32)
    strides: tuple[int, ...] = (1, 4, 16)
    encoder_tcms: list[TcModuleConfig] = field(default_factory=list)
    refine_tcm: TcModuleConfig | None = None
    padding_mode: str = "zeros"
    upsample: str = "transposed"

    def __post_init__(self):
        self.input_size = tuple(int(v) for v in self.input_size)
        self.channels = tuple(int(v) for v in self.channels)
        self.strides = tuple(int(v) for v in self.strides)
        self.encoder_tcms = [t if isinstance(t, TcModuleConfig) else TcModuleConfig(**t)
                             for t in self.encoder_tcms]
        if isinstance(self.refine_tcm, dict):
            self.refine_tcm = TcModuleConfig(**self.refine_tcm)

    @property
    def tcms(self) -> list[TcModuleConfig]:
        """TCM-0..n in ablation order: encoder levels, then refine."""
        return self.encoder_tcms + ([self.refine_tcm] if self.refine_tcm is not None else [])

    def validate(self) -> "NetworkConfig":
        H, W = self.input_size
        if self.class_count < 2:
            raise ConfigError("class_count must be >= 2")
        if not 1 <= len(self.channels) <= 3 or len(self.channels) != len(self.strides):
            raise ConfigError("channels and strides must list 1-3 levels each")
        if self.strides[0] != 1 or any(b % a for a, b in zip(self.strides, self.strides[1:])):
            raise ConfigError(f"strides must start at 1 and divide each other: {self.strides}")
        if H % self.strides[-1] or W % self.strides[-1]:
            raise ConfigError(f"input {self.input_size} not divisible by max stride {self.strides[-1]}")
        if len(self.encoder_tcms) != len(self.channels):
            raise ConfigError("one encoder TC module per level is required")
        if self.padding_mode not in ("zeros", "circular") or self.upsample not in ("transposed", "nearest"):
            raise ConfigError("bad padding_mode or upsample option")
        levels = [(c, s) for c, s in zip(self.channels, self.strides)]
        if self.refine_tcm is not None:
            levels.append((self.channels[0], 1))
        for i, (tcm, (c, s)) in enumerate(zip(self.tcms, levels)):
            tcm.validate()
            if tcm.in_channels != c or tcm.out_channels != c:
                raise ConfigError(f"TCM-{i} channels ({tcm.in_channels}->{tcm.out_channels}) != level width {c}")
            if (H // s) % tcm.patch_size or (W // s) % tcm.patch_size:
                raise ConfigError(f"TCM-{i}: extent {(H // s, W // s)} not divisible by patch {tcm.patch_size}")
        return self

    # -------------------------------------------------------------- presets

    @classmethod
    def build(cls, input_size=(64, 64), channels=(8, 16, 32), strides=(1, 4, 16),
              patch_sizes=(8, 4, 1, 8), embed_dim=32, heads=4, layers=2, class_count=12,
              refine=True, **kwargs) -> "NetworkConfig":
        enc = [TcModuleConfig(c, c, p, layers, embed_dim, heads) for c, p in zip(channels, patch_sizes)]
        ref = TcModuleConfig(channels[0], channels[0], patch_sizes[len(channels)], layers, embed_dim, heads) \
            if refine else None
        return cls(input_size=input_size, class_count=class_count, channels=channels, strides=strides,
                   encoder_tcms=enc, refine_tcm=ref, **kwargs).validate()

    @classmethod
    def toy(cls, class_count: int = 12, **kwargs) -> "NetworkConfig":
        """64x64 input, widths {8,16,32}, embed 32, 4 heads, L=2, patches 8/4/1 (+8 for refine)."""
        return cls.build(class_count=class_count, **kwargs)

    @classmethod
    def full(cls, class_count: int = 12) -> "NetworkConfig":
        """512x512 input, widths {32,128,512}, embed 512, 16 heads, L=2, patches 16/4/1 (+16 for refine)."""
        return cls.build(input_size=(512, 512), channels=(32, 128, 512), patch_sizes=(16, 4, 1, 16),
                         embed_dim=512, heads=16, class_count=class_count)

    @classmethod
    def micro(cls, class_count: int = 2) -> "NetworkConfig":
        """8x8 input, one level, one TC module; sized for finite-difference checks."""
        return cls.build(input_size=(8, 8), channels=(4,), strides=(1,), patch_sizes=(4, 4),
                         embed_dim=4, heads=2, layers=1, class_count=class_count, refine=False)

    # -------------------------------------------------------------- ablations

    def with_tcm(self, index: int, **changes) -> "NetworkConfig":
        cfg = copy.deepcopy(self)
        n_enc = len(cfg.encoder_tcms)
        if index < n_enc:
            cfg.encoder_tcms[index] = replace(cfg.encoder_tcms[index], **changes)
        elif index == n_enc and cfg.refine_tcm is not None:
            cfg.refine_tcm = replace(cfg.refine_tcm, **changes)
        else:
            raise IndexError(f"no TCM-{index}")
        return cfg.validate()

    def with_all_tcms(self, **changes) -> "NetworkConfig":
        cfg = self
        for i in range(len(self.tcms)):
            cfg = cfg.with_tcm(i, **changes)
        return cfg

    def to_dict(self) -> dict:
        d = asdict(self)
        d["input_size"] = list(self.input_size)
        d["channels"] = list(self.channels)
        d["strides"] = list(self.strides)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        validate_schema(d, NETWORK_SCHEMA, "network")
        return cls(**copy.deepcopy(d)).validate()


def ablation_configs(base: NetworkConfig) -> dict[str, NetworkConfig]:
    """The path on/off switches of the TC-module ablation, keyed by row name."""
    n = len(base.tcms)
    out = {
        "CNN + Transformer": base,
        "CNN only": base.with_all_tcms(enable_transformer=False),
        "Transformer only": base.with_all_tcms(enable_cnn=False),
    }
    for i in range(n):
        out[f"Disable Transformer in TCM-{i}"] = base.with_tcm(i, enable_transformer=False)
    for i in range(n):
        out[f"Disable CNN in TCM-{i}"] = base.with_tcm(i, enable_cnn=False)
    return out


@dataclass
class LossConfig:
    dice_weight: float = 0.5
    ce_weight: float = 0.5
    epsilon: float = 1e-4
    class_count: int = 12

    def __post_init__(self):
        if self.dice_weight < 0 or self.ce_weight < 0:
            raise ConfigError("loss weights must be >= 0")
        if self.epsilon <= 0:
            raise ConfigError("epsilon must be > 0")


@dataclass
class OptimizerConfig:
    lr: float = 1e-4
    clip_norm: float = 1.0
    batch_size: int = 1
    epochs: int = 500


@dataclass
class AugmentConfig:
    elastic_sigma: float = 0.25
    elastic_grids: tuple[int, ...] = (9, 17)
    translate_px: int = 16

    def __post_init__(self):
        self.elastic_grids = tuple(int(g) for g in self.elastic_grids)


@dataclass
class RunConfig:
    network: NetworkConfig = field(default_factory=NetworkConfig.toy)
    loss: LossConfig = field(default_factory=LossConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    augmentation: AugmentConfig = field(default_factory=AugmentConfig)
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "network": self.network.to_dict(),
            "loss": asdict(self.loss),
            "optimizer": asdict(self.optimizer),
            "augmentation": {**asdict(self.augmentation),
                             "elastic_grids": list(self.augmentation.elastic_grids)},
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        validate_schema(d, RUN_SCHEMA, "run config")
        net = NetworkConfig.from_dict(d["network"]) if "network" in d else NetworkConfig.toy()
        loss = LossConfig(**d.get("loss", {}))
        if loss.class_count != net.class_count:
            raise ConfigError(f"loss.class_count {loss.class_count} != network.class_count {net.class_count}")
        return cls(network=net, loss=loss, optimizer=OptimizerConfig(**d.get("optimizer", {})),
                   augmentation=AugmentConfig(**d.get("augmentation", {})), seed=d.get("seed", 0))


def validate_schema(d: dict, schema: dict, what: str) -> None:
    try:
        jsonschema.validate(d, schema)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{what}: {exc.message} at {where}") from None


_INT = {"type": "integer"}
_POS_INT = {"type": "integer", "minimum": 1}

TCM_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["in_channels", "out_channels", "patch_size"],
    "properties": {
        "in_channels": _POS_INT, "out_channels": _POS_INT, "patch_size": _POS_INT,
        "layers": {"type": "integer", "minimum": 0}, "embed_dim": _POS_INT, "heads": _POS_INT,
        "enable_cnn": {"type": "boolean"}, "enable_transformer": {"type": "boolean"},
        "qk_mode": {"enum": ["mlp", "linear"]},
        "position_params": {"enum": ["shared", "per_head"]},
        "position_term": {"enum": ["per_head", "global"]},
    },
}

NETWORK_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "input_size": {"type": "array", "items": _POS_INT, "minItems": 2, "maxItems": 2},
        "in_channels": _POS_INT,
        "class_count": {"type": "integer", "minimum": 2},
        "channels": {"type": "array", "items": _POS_INT, "minItems": 1, "maxItems": 3},
        "strides": {"type": "array", "items": _POS_INT, "minItems": 1, "maxItems": 3},
        "encoder_tcms": {"type": "array", "items": TCM_SCHEMA},
        "refine_tcm": {"oneOf": [{"type": "null"}, TCM_SCHEMA]},
        "padding_mode": {"enum": ["zeros", "circular"]},
        "upsample": {"enum": ["transposed", "nearest"]},
    },
}

RUN_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "SymTC run configuration",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "network": NETWORK_SCHEMA,
        "loss": {
            "type": "object", "additionalProperties": False,
            "properties": {"dice_weight": {"type": "number", "minimum": 0},
                           "ce_weight": {"type": "number", "minimum": 0},
                           "epsilon": {"type": "number", "exclusiveMinimum": 0},
                           "class_count": {"type": "integer", "minimum": 2}},
        },
        "optimizer": {
            "type": "object", "additionalProperties": False,
            "properties": {"lr": {"type": "number", "minimum": 0}, "clip_norm": {"type": "number", "exclusiveMinimum": 0},
                           "batch_size": _POS_INT, "epochs": {"type": "integer", "minimum": 0}},
        },
        "augmentation": {
            "type": "object", "additionalProperties": False,
            "properties": {"elastic_sigma": {"type": "number", "minimum": 0},
                           "elastic_grids": {"type": "array", "items": {"type": "integer", "minimum": 2}},
                           "translate_px": {"type": "integer", "minimum": 0}},
        },
        "seed": _INT,
    },
}
