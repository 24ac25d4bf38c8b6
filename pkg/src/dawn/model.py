"""Model geometry, parameter initialisation and the weight checkpoint format.

Checkpoints are ``.npz`` archives. Every parameter is stored under its own
name; one extra entry, ``__meta__``, holds a JSON string with the format
version, preset name and controller width, so a file can be reloaded
without knowing how it was produced.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from dawn.backbone import PRESETS, BackboneConfig, init_backbone
from dawn.memory import init_controller

FORMAT_VERSION = 1
HIDDEN = {"paper": 512, "toy": 16, "micro": 8}


@dataclass(frozen=True)
class ModelSpec:
    backbone: BackboneConfig
    hidden: int

    @classmethod
    def preset(cls, name: str, hidden: int | None = None) -> "ModelSpec":
        if name not in PRESETS:
            raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
        return cls(PRESETS[name], HIDDEN[name] if hidden is None else hidden)

    @property
    def fg_input(self) -> int:
        b = self.backbone
        return b.m * b.m * b.channels


@dataclass
class Weights:
    spec: ModelSpec
    params: dict[str, np.ndarray]

    def __getitem__(self, key):
        return self.params[key]

    def copy(self) -> "Weights":
        return Weights(self.spec, {k: v.copy() for k, v in self.params.items()})


def init_weights(spec: ModelSpec, seed: int = 0) -> Weights:
    rng = np.random.default_rng(seed)
    c = spec.backbone.channels
    params = init_backbone(spec.backbone, rng)
    params.update(init_controller("fg.", spec.fg_input, c, spec.hidden, rng, residual=True))
    params.update(init_controller("bg.", c, c, spec.hidden, rng))
    # response scale and offset seen only by the training loss
    b = spec.backbone
    params["head.gain"] = np.array([1.0 / (b.m * b.m * c)])
    params["head.bias"] = np.zeros(1)
    return Weights(spec, params)


def save_weights(weights: Weights, path) -> None:
    meta = {
        "format_version": FORMAT_VERSION,
        "preset": weights.spec.backbone.name,
        "hidden": weights.spec.hidden,
    }
    arrays = {k: np.asarray(v, dtype=np.float64) for k, v in weights.params.items()}
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.array(json.dumps(meta, sort_keys=True)), **arrays)


def load_weights(path) -> Weights:
    path = Path(path)
    with np.load(path, allow_pickle=False) as data:
        if "__meta__" not in data.files:
            raise ValueError(f"{path} is not a weight checkpoint (no __meta__ entry)")
        meta = json.loads(str(data["__meta__"]))
        if meta.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {meta.get('format_version')}")
        params = {k: data[k].copy() for k in data.files if k != "__meta__"}
    spec = ModelSpec.preset(meta["preset"], meta["hidden"])
    expected = init_weights(spec, 0).params
    missing = sorted(set(expected) - set(params))
    if missing:
        raise ValueError(f"{path}: missing parameters {missing}")
    for k, v in expected.items():
        if params[k].shape != v.shape:
            raise ValueError(f"{path}: parameter {k} has shape {params[k].shape}, expected {v.shape}")
    return Weights(spec, params)
