"""Experiment configuration: one flat, versioned, JSON-serializable record.

Every artifact the pipeline writes is a deterministic function of one
ExperimentConfig plus its master seed. Sub-stage seeds are derived
hierarchically with derive_seed so any stage can be reproduced alone.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1


class ConfigError(Exception):
    """Bad configuration file or inconsistent parameter values."""


def derive_seed(*keys: int) -> int:
    """Collapse an integer key path into one reproducible 64-bit seed."""
    seq = np.random.SeedSequence([int(k) for k in keys])
    return int(seq.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class ExperimentConfig:
    schema_version: int = SCHEMA_VERSION
    seed: int = 0
    out_dir: str = "runs/out"

    # scene/camera geometry
    n_classes: int = 12
    image_size: int = 64
    fov_deg: float = 60.0
    reference_depth: float = 7.0
    patch_side: float = 5.0
    texture_size: int = 64

    # dataset sizes (per class)
    n_train_per_class: int = 80
    n_val_per_class: int = 20
    n_attack_per_class: int = 40

    # classifier training
    epochs: int = 30
    model_batch_size: int = 32
    model_lr: float = 1e-1
    model_momentum: float = 0.9

    # target tiering
    tier_size: int = 3
    quick_budget_batches: int = 25

    # patch optimization
    attack_batches: int = 200
    attack_batch_size: int = 32
    attack_lr: float = 3e-2

    # evaluation
    sweep_intervals: int = 60
    images_per_point: int = 320
    grid_intervals: int = 20
    grid_images_per_point: int = 320
    randomize_location: bool = True

    # per-family training supports
    yaw_supports: tuple = (0.0, 20.0, 40.0, 60.0)
    roll_supports: tuple = (0.0, 45.0, 90.0, 180.0)
    loom_supports: tuple = ((7.0, 7.0), (6.0, 8.0), (5.0, 9.0), (4.0, 10.0))
    grid_supports: tuple = ((0.0, 0.0), (60.0, 180.0))

    # evaluation ranges
    yaw_sweep: tuple = (-90.0, 90.0)
    roll_sweep: tuple = (-180.0, 180.0)
    loom_sweep: tuple = (2.0, 12.0)
    grid_yaw_range: tuple = (-180.0, 180.0)
    grid_roll_range: tuple = (-360.0, 360.0)

    def validate(self) -> None:
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.schema_version}, "
                              f"expected {SCHEMA_VERSION}")
        if self.n_classes < 2:
            raise ConfigError(f"n_classes must be >= 2, got {self.n_classes}")
        if self.image_size % 4 != 0 or self.image_size <= 0:
            raise ConfigError(f"image_size must be a positive multiple of 4, "
                              f"got {self.image_size}")
        if not 0 < self.fov_deg < 180:
            raise ConfigError(f"fov_deg must be in (0, 180), got {self.fov_deg}")
        for name in ("reference_depth", "patch_side", "model_lr", "attack_lr"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("texture_size", "n_train_per_class", "n_val_per_class",
                     "n_attack_per_class", "epochs", "model_batch_size",
                     "quick_budget_batches", "attack_batch_size", "sweep_intervals",
                     "images_per_point", "grid_intervals", "grid_images_per_point"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.attack_batches < 0:
            raise ConfigError(f"attack_batches must be >= 0, got {self.attack_batches}")
        if self.tier_size < 1 or 3 * self.tier_size > self.n_classes:
            raise ConfigError(f"tier_size {self.tier_size} does not fit 3 tiers "
                              f"into {self.n_classes} classes")
        for s in self.yaw_supports + self.roll_supports:
            if s < 0:
                raise ConfigError(f"angular supports must be nonnegative, got {s}")
        for pair in self.loom_supports:
            if len(pair) != 2 or not 0 < pair[0] <= pair[1]:
                raise ConfigError(f"loom support must be 0 < lo <= hi, got {pair}")
        for pair in self.grid_supports:
            if len(pair) != 2 or pair[0] < 0 or pair[1] < 0:
                raise ConfigError(f"grid support must be a nonnegative "
                                  f"(yaw, roll) pair, got {pair}")
        for name in ("yaw_sweep", "roll_sweep", "loom_sweep", "grid_yaw_range",
                     "grid_roll_range"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ConfigError(f"{name} must satisfy lo < hi, got ({lo}, {hi})")
        if self.loom_sweep[0] <= 0:
            raise ConfigError(f"loom_sweep distances must be positive, "
                              f"got {self.loom_sweep}")


_SCALAR_COERCE = {int: int, float: float, str: str, bool: bool}

_PAIR_FIELDS = ("yaw_sweep", "roll_sweep", "loom_sweep", "grid_yaw_range",
                "grid_roll_range")
_LIST_FIELDS = ("yaw_supports", "roll_supports")
_PAIRLIST_FIELDS = ("loom_supports", "grid_supports")


def _coerce(name: str, value, default):
    try:
        if name in _PAIR_FIELDS:
            lo, hi = value
            return (float(lo), float(hi))
        if name in _LIST_FIELDS:
            return tuple(float(v) for v in value)
        if name in _PAIRLIST_FIELDS:
            return tuple((float(p[0]), float(p[1])) for p in value)
        caster = _SCALAR_COERCE[type(default)]
        if caster is bool and not isinstance(value, bool):
            raise ConfigError(f"field '{name}' must be a boolean, got {value!r}")
        if caster in (int,) and isinstance(value, bool):
            raise ConfigError(f"field '{name}' must be an integer, got {value!r}")
        if caster is int and isinstance(value, float) and not value.is_integer():
            raise ConfigError(f"field '{name}' must be an integer, got {value!r}")
        return caster(value)
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(f"field '{name}' has invalid value {value!r}: {e}") from e


def config_from_dict(doc: dict) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError(f"config document must be a JSON object, got {type(doc).__name__}")
    defaults = ExperimentConfig()
    known = {f.name: getattr(defaults, f.name) for f in dataclasses.fields(defaults)}
    unknown = sorted(set(doc) - set(known))
    if unknown:
        raise ConfigError(f"unknown config field(s): {', '.join(unknown)}")
    kwargs = {}
    for name, value in doc.items():
        kwargs[name] = _coerce(name, value, known[name])
    cfg = ExperimentConfig(**kwargs)
    cfg.validate()
    return cfg


def config_to_dict(cfg: ExperimentConfig) -> dict:
    doc = dataclasses.asdict(cfg)
    for name in _LIST_FIELDS + _PAIR_FIELDS:
        doc[name] = list(doc[name])
    for name in _PAIRLIST_FIELDS:
        doc[name] = [list(p) for p in doc[name]]
    return doc


def save_config(cfg: ExperimentConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(config_to_dict(cfg), indent=2, sort_keys=True) + "\n")


def load_config(path: str | Path) -> ExperimentConfig:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: line {e.lineno}, column {e.colno}: {e.msg}") from e
    return config_from_dict(doc)


def full_preset(**overrides) -> ExperimentConfig:
    """The full-budget protocol (200x32 attack batches, 320 images/point)."""
    cfg = dataclasses.replace(ExperimentConfig(), **overrides)
    cfg.validate()
    return cfg


def desk_preset(**overrides) -> ExperimentConfig:
    """Half-budget preset (100x32 batches, 128 images/point); the test suite
    and the trend checks run at this scale."""
    base = dict(attack_batches=100, images_per_point=128, grid_images_per_point=128)
    base.update(overrides)
    cfg = dataclasses.replace(ExperimentConfig(), **base)
    cfg.validate()
    return cfg
