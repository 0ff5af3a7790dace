"""Parameter accounting and smoke runs over the TC-module path switches."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import NetworkConfig, ablation_configs
from .network import SymTC


@dataclass
class AblationRow:
    name: str
    params: int
    expected: int
    delta: int
    output_shape: tuple[int, ...]
    finite: bool

    @property
    def ok(self) -> bool:
        return self.params == self.expected and self.finite


def _tcm_modules(model: SymTC):
    return list(model.encoder) + ([model.refine] if model.refine is not None else [])


def expected_params(full: SymTC, cfg: NetworkConfig) -> int:
    """Full count minus the parameters of every path that cfg switches off."""
    removed = 0
    for mod, tcm in zip(_tcm_modules(full), cfg.tcms):
        if not tcm.enable_cnn and mod.cnn is not None:
            removed += mod.cnn.param_count()
        if not tcm.enable_transformer and mod.transformer is not None:
            removed += mod.transformer.param_count()
    return full.param_count() - removed


def ablation_table(base: NetworkConfig, seed: int = 0, batch: int = 1) -> list[AblationRow]:
    full = SymTC(base, seed)
    x = np.random.default_rng(seed).uniform(size=(batch, base.in_channels) + tuple(base.input_size))
    rows = []
    for name, cfg in ablation_configs(base).items():
        model = SymTC(cfg, seed)
        y = model(x).value
        n = model.param_count()
        rows.append(AblationRow(name, n, expected_params(full, cfg), n - full.param_count(), y.shape,
                                bool(np.all(np.isfinite(y)))))
    return rows


def format_table(rows: list[AblationRow], sep: str | None = None) -> str:
    cols = ("config", "params", "delta", "expected", "output", "ok")
    data = [(r.name, str(r.params), str(r.delta), str(r.expected), "x".join(map(str, r.output_shape)),
             "yes" if r.ok else "NO") for r in rows]
    if sep is not None:
        return "\n".join(sep.join(r) for r in [cols] + data) + "\n"
    widths = [max(len(c), *(len(r[i]) for r in data)) for i, c in enumerate(cols)]
    return "\n".join("  ".join(v.ljust(w) for v, w in zip(r, widths)) for r in [cols] + data) + "\n"
