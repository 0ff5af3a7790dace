"""Finite-difference gradient suites for every differentiable component.

Losses are random linear readouts sum(y * R) of each output, which keeps the
central-difference truncation error far below the tolerances.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from . import ndgrad as nd
from .attention import RpeParams, rmha_output
from .config import NetworkConfig
from .losses import combined_loss
from .ndgrad import Parameter, Rng, check_gradients
from .network import SymTC
from .shapes.biomech import EnergyConfig, Mesh, TransformNet, strain_energy

TOLERANCES = {"ndgrad": 1e-6, "rmha": 1e-4, "loss": 1e-5, "network": 1e-4, "energy": 1e-4}


def _readout(y, rng: Rng):
    y = nd.as_array(y)
    return nd.sum(y * rng.normal(y.shape))


def _away_from_zero(rng: Rng, shape, lo=0.2, hi=1.5) -> np.ndarray:
    return rng.uniform(shape, lo, hi) * np.where(rng.uniform(shape) < 0.5, -1.0, 1.0)


def _kernel_cases(rng: Rng) -> dict[str, tuple[Callable, list]]:
    P = Parameter
    a, b = P(rng.normal((3, 4))), P(rng.normal((3, 4)))
    pos = P(rng.uniform((3, 4), 0.5, 2.0))
    row = P(rng.normal((4,)))
    m1, m2 = P(rng.normal((2, 3, 4))), P(rng.normal((4, 5)))
    img = P(rng.normal((2, 3, 6, 6)))
    w3 = P(rng.normal((4, 3, 3, 3)))
    bias4 = P(rng.normal(4))
    wt = P(rng.normal((3, 2, 3, 3)))
    gam, bet = P(rng.normal(4) + 1.0), P(rng.normal(4))
    gimg = P(rng.normal((1, 2, 5, 5)))
    coords = P(np.floor(rng.uniform((1, 3, 4, 2), 0.0, 3.0)) + rng.uniform((1, 3, 4, 2), 0.2, 0.8))
    nz = P(_away_from_zero(rng, (3, 4)))
    cl = P(rng.uniform((3, 4), -2.0, 2.0))
    cl.value = np.where(np.abs(np.abs(cl.value) - 1.0) < 0.1, cl.value * 0.5, cl.value)
    r = rng.child(7)

    def ro(f):
        return lambda: _readout(f(), r.child(0))

    return {
        "add": (ro(lambda: a + row), [a, row]),
        "sub": (ro(lambda: a - b), [a, b]),
        "mul": (ro(lambda: a * b * row), [a, b, row]),
        "div": (ro(lambda: a / pos), [a, pos]),
        "neg": (ro(lambda: -a), [a]),
        "power": (ro(lambda: nd.power(pos, 2.5)), [pos]),
        "sqrt": (ro(lambda: nd.sqrt(pos)), [pos]),
        "sin": (ro(lambda: nd.sin(a)), [a]),
        "cos": (ro(lambda: nd.cos(a)), [a]),
        "exp": (ro(lambda: nd.exp(a)), [a]),
        "log": (ro(lambda: nd.log(pos)), [pos]),
        "relu": (ro(lambda: nd.relu(nz)), [nz]),
        "clip": (ro(lambda: nd.clip(cl, -1.0, 1.0)), [cl]),
        "matmul": (ro(lambda: nd.matmul(m1, m2)), [m1, m2]),
        "reshape": (ro(lambda: nd.reshape(a, (2, 6)) * 1.5), [a]),
        "transpose": (ro(lambda: nd.transpose(m1, (2, 0, 1))), [m1]),
        "swapaxes": (ro(lambda: nd.swapaxes(m1, 0, 2)), [m1]),
        "broadcast_to": (ro(lambda: nd.broadcast_to(row, (5, 4))), [row]),
        "concat": (ro(lambda: nd.concat([a, b], axis=1)), [a, b]),
        "stack": (ro(lambda: nd.stack([a, b], axis=0)), [a, b]),
        "getitem_basic": (ro(lambda: a[1:, ::2]), [a]),
        "getitem_fancy": (ro(lambda: a[np.array([0, 2, 0]), np.array([1, 1, 3])]), [a]),
        "pad2d_zeros": (ro(lambda: nd.pad2d(img, (1, 2, 0, 1))), [img]),
        "pad2d_circular": (ro(lambda: nd.pad2d(img, (2, 1, 1, 2), mode="circular")), [img]),
        "sum": (ro(lambda: nd.sum(m1, axis=(0, 2), keepdims=True)), [m1]),
        "mean": (ro(lambda: nd.mean(m1, axis=1)), [m1]),
        "softmax": (ro(lambda: nd.softmax(m1, axis=1)), [m1]),
        "layer_norm": (ro(lambda: nd.layer_norm(a, gam, bet)), [a, gam, bet]),
        "group_norm": (ro(lambda: nd.group_norm(nd.reshape(img, (2, 3, 6, 6)), 3)), [img]),
        "conv2d_same": (ro(lambda: nd.conv2d(img, w3, bias4)), [img, w3, bias4]),
        "conv2d_strided": (ro(lambda: nd.conv2d(img, w3, bias4, stride=2, padding=1)), [img, w3, bias4]),
        "conv2d_dilated": (ro(lambda: nd.conv2d(img, w3, None, dilation=2)), [img, w3]),
        "conv2d_circular": (ro(lambda: nd.conv2d(img, w3, None, padding_mode="circular")), [img, w3]),
        "conv_transpose2d": (ro(lambda: nd.conv_transpose2d(img, wt, None, stride=2, padding=1)), [img, wt]),
        "resize_bilinear": (ro(lambda: nd.resize(img, (9, 4))), [img]),
        "resize_nearest": (ro(lambda: nd.resize(img, (12, 12), mode="nearest")), [img]),
        "grid_sample": (ro(lambda: nd.grid_sample(gimg, coords)), [gimg, coords]),
    }


def ndgrad_suite(seed: int = 0) -> dict[str, float]:
    """Worst relative error per kernel."""
    out = {}
    for name, (fn, arrays) in _kernel_cases(Rng(seed)).items():
        out[name] = max(check_gradients(fn, arrays, h=1e-5).values())
    return out


def rmha_suite(seed: int = 0) -> dict[str, float]:
    rng = Rng(seed)
    out = {}
    for qk in ("mlp", "linear"):
        params = RpeParams(8, 2, rng.child(1), qk_mode=qk)
        params.position_out.weight = Parameter(rng.normal(params.position_out.weight.shape))
        x, p = Parameter(rng.normal((2, 5, 8))), rng.uniform((5, 2), -1.0, 1.0)
        readout = rng.normal((2, 5, 8))

        def loss():
            return nd.sum(rmha_output(x, p, params) * readout)

        named = {f"{qk}:{k}": v for k, v in params.named_parameters()}
        named[f"{qk}:x"] = x
        out.update(check_gradients(loss, named, h=1e-5))
    return out


def loss_suite(seed: int = 0) -> dict[str, float]:
    rng = Rng(seed)
    logits = Parameter(rng.normal((2, 3, 8, 8)))
    labels = rng.integers(0, 3, size=(2, 8, 8))
    return check_gradients(lambda: combined_loss(nd.softmax(logits, axis=1), labels), {"logits": logits}, h=1e-5)


def network_suite(seed: int = 0, max_elements: int | None = None) -> dict[str, float]:
    """Every parameter of the micro network (8x8 input, 2 classes, one TC module)."""
    rng = Rng(seed)
    model = SymTC(NetworkConfig.micro(), seed=seed)
    # move norm affine parameters and zero-initialized layers off their special values
    for name, p in model.named_parameters():
        if "position_out" in name or name.endswith("bias"):
            p.value = rng.normal(p.shape) * 0.1
    x = rng.uniform((1, 1, 8, 8))
    readout = rng.normal((1, 2, 8, 8))

    def loss():
        return nd.sum(model(x) * readout)

    return check_gradients(loss, dict(model.named_parameters()), h=1e-5, max_elements=max_elements,
                           rng=np.random.default_rng(seed))


def energy_suite(seed: int = 0) -> dict[str, float]:
    """Strain energy w.r.t. TransformNet weights at initialization (and a perturbed state).

    At the zero-displacement initialization the stress-free density is stationary,
    so the literal density (nonzero gradient) is checked there as well.
    """
    mesh = Mesh(4)
    out = {}
    literal = EnergyConfig(elements=4, stress_free=False)
    net = TransformNet((16, 16), hidden=(8, 8), seed=seed)
    with nd.Tape() as tape:
        e = strain_energy(net, mesh, literal)
    ref_scale = max(float(np.abs(g).max()) for _, g in tape.backward(e).items())
    for label, cfg, perturb, scale in (("init", EnergyConfig(elements=4), False, ref_scale),
                                       ("init-literal", literal, False, None),
                                       ("perturbed", EnergyConfig(elements=4), True, None)):
        net = TransformNet((16, 16), hidden=(8, 8), seed=seed)
        if perturb:
            net.out.weight = Parameter(Rng(seed + 1).normal(net.out.weight.shape) * 0.05)
        res = check_gradients(lambda: strain_energy(net, mesh, cfg), dict(net.named_parameters()), h=1e-5,
                              scale=scale)
        out.update({f"{label}:{k}": v for k, v in res.items()})
    return out


SUITES = {"ndgrad": ndgrad_suite, "rmha": rmha_suite, "loss": loss_suite, "network": network_suite,
          "energy": energy_suite}


def run_all(seed: int = 0, names=None) -> dict[str, dict[str, float]]:
    return {n: SUITES[n](seed) for n in (names or SUITES)}
