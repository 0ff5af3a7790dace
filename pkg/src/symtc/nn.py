"""Parameter containers and the small set of layers the network is built from."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from . import ndgrad as nd
from .ndgrad import DiffArray, Parameter, Rng


class Module:
    """Holds parameters and sub-modules as attributes, in definition order."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, DiffArray]]:
        for key, val in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(val, DiffArray) and val.requires_grad:
                yield name, val
            elif isinstance(val, Module):
                yield from val.named_parameters(name + ".")
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")

    def parameters(self) -> list[DiffArray]:
        return [p for _, p in self.named_parameters()]

    def param_count(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.value for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        unexpected = set(state) - set(own)
        if missing or unexpected:
            raise KeyError(f"state mismatch: missing={sorted(missing)} unexpected={sorted(unexpected)}")
        for name, p in own.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.shape:
                raise ValueError(f"{name}: shape {arr.shape} != {p.shape}")
            p.value = _readonly(arr)


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=np.float64)
    arr.flags.writeable = False
    return arr


def uniform_init(rng: Rng, shape, fan_in: int) -> np.ndarray:
    bound = np.sqrt(1.0 / max(fan_in, 1))
    return rng.uniform(shape, -bound, bound)


class Linear(Module):
    def __init__(self, in_features: int, out_features: int, rng: Rng, bias: bool = True, zero: bool = False):
        shape = (in_features, out_features)
        self.weight = Parameter(np.zeros(shape) if zero else uniform_init(rng, shape, in_features))
        self.bias = Parameter(np.zeros(out_features)) if bias else None

    def __call__(self, x):
        y = nd.matmul(x, self.weight)
        return y if self.bias is None else y + self.bias


class Conv2d(Module):
    def __init__(self, cin: int, cout: int, kernel: int, rng: Rng, stride: int = 1, padding="same",
                 dilation: int = 1, padding_mode: str = "zeros", bias: bool = True):
        fan_in = cin * kernel * kernel
        self.weight = Parameter(uniform_init(rng, (cout, cin, kernel, kernel), fan_in))
        self.bias = Parameter(np.zeros(cout)) if bias else None
        self.stride = stride
        self.padding = padding
        self.dilation = dilation
        self.padding_mode = padding_mode

    def __call__(self, x):
        return nd.conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding,
                         dilation=self.dilation, padding_mode=self.padding_mode)


class ConvTranspose2d(Module):
    def __init__(self, cin: int, cout: int, kernel: int, rng: Rng, stride: int = 1, bias: bool = True):
        self.weight = Parameter(uniform_init(rng, (cin, cout, kernel, kernel), cin))
        self.bias = Parameter(np.zeros(cout)) if bias else None
        self.stride = stride

    def __call__(self, x):
        return nd.conv_transpose2d(x, self.weight, self.bias, stride=self.stride)


def group_count(channels: int) -> int:
    g = min(8, channels)
    while channels % g:
        g -= 1
    return g


class GroupNorm(Module):
    def __init__(self, channels: int, groups: int | None = None):
        self.groups = groups or group_count(channels)
        self.weight = Parameter(np.ones(channels))
        self.bias = Parameter(np.zeros(channels))

    def __call__(self, x):
        return nd.group_norm(x, self.groups, self.weight, self.bias)


class LayerNorm(Module):
    def __init__(self, dim: int):
        self.weight = Parameter(np.ones(dim))
        self.bias = Parameter(np.zeros(dim))

    def __call__(self, x):
        return nd.layer_norm(x, self.weight, self.bias)
