"""Patch optimization in expectation over pose transformations.

Each step samples a pose (yaw, roll, camera distance, optionally a 2D
location) per scene, renders the patch into the scene, and ascends the
mean targeted log-probability with adaptive moment estimates. Gradients
flow through the classifier into the composited pixels and from there
back onto the texels; poses are sampled, never optimized.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import CameraIntrinsics, PatchPlacement, intrinsics_from_fov, project_patch
from .render import apply_patch, backprop_to_texture, texture_from_png, texture_to_png


@dataclass(frozen=True)
class TransformDistribution:
    """Uniform pose supports the patch is trained (or evaluated) under.

    Yaw and roll are symmetric about zero; loom is the camera-distance
    interval [z_lo, z_hi]; side is the patch's world edge length.
    """

    yaw_max: float = 0.0
    roll_max: float = 0.0
    z_lo: float = 7.0
    z_hi: float = 7.0
    randomize_location: bool = True
    side: float = 2.0

    def __post_init__(self):
        if self.yaw_max < 0 or self.roll_max < 0:
            raise ValueError("yaw_max and roll_max must be nonnegative")
        if not 0 < self.z_lo <= self.z_hi:
            raise ValueError(f"need 0 < z_lo <= z_hi, got [{self.z_lo}, {self.z_hi}]")
        if self.side <= 0:
            raise ValueError(f"side must be positive, got {self.side}")

    def to_dict(self) -> dict:
        return {
            "yaw_max": self.yaw_max,
            "roll_max": self.roll_max,
            "z_lo": self.z_lo,
            "z_hi": self.z_hi,
            "randomize_location": self.randomize_location,
            "side": self.side,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TransformDistribution":
        return cls(yaw_max=float(d["yaw_max"]), roll_max=float(d["roll_max"]),
                   z_lo=float(d["z_lo"]), z_hi=float(d["z_hi"]),
                   randomize_location=bool(d["randomize_location"]),
                   side=float(d["side"]))


@dataclass(frozen=True)
class AttackConfig:
    n_batches: int = 200
    batch_size: int = 32
    lr: float = 3e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    texture_size: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.n_batches < 0:
            raise ValueError(f"n_batches must be >= 0, got {self.n_batches}")
        if self.batch_size <= 0:
            raise ValueError(f"batch_size must be positive, got {self.batch_size}")
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.texture_size <= 0:
            raise ValueError(f"texture_size must be positive, got {self.texture_size}")

    def to_dict(self) -> dict:
        return {
            "n_batches": self.n_batches, "batch_size": self.batch_size,
            "lr": self.lr, "beta1": self.beta1, "beta2": self.beta2,
            "eps": self.eps, "texture_size": self.texture_size, "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AttackConfig":
        return cls(n_batches=int(d["n_batches"]), batch_size=int(d["batch_size"]),
                   lr=float(d["lr"]), beta1=float(d["beta1"]), beta2=float(d["beta2"]),
                   eps=float(d["eps"]), texture_size=int(d["texture_size"]),
                   seed=int(d["seed"]))


@dataclass
class Patch:
    """An optimized texture plus everything needed to reproduce it."""

    texture: np.ndarray
    target: int
    dist: TransformDistribution
    config: AttackConfig
    objective_history: tuple = ()

    def __post_init__(self):
        t = np.asarray(self.texture, dtype=float)
        if t.min() < 0.0 or t.max() > 1.0:
            raise ValueError("texture values must lie in [0, 1]")
        self.texture = t


@dataclass
class AdamState:
    """First/second-moment accumulator for ascent steps."""

    lr: float
    beta1: float
    beta2: float
    eps: float
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def for_config(cls, shape: tuple, config: AttackConfig) -> "AdamState":
        return cls(lr=config.lr, beta1=config.beta1, beta2=config.beta2,
                   eps=config.eps, m=np.zeros(shape), v=np.zeros(shape))

    def ascent_step(self, grad: np.ndarray) -> np.ndarray:
        """Bias-corrected update to ADD to the parameters."""
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        mhat = self.m / (1.0 - self.beta1 ** self.t)
        vhat = self.v / (1.0 - self.beta2 ** self.t)
        return self.lr * mhat / (np.sqrt(vhat) + self.eps)


def _quad_in_image(quad: np.ndarray | None, k: CameraIntrinsics) -> bool:
    if quad is None:
        return False
    return bool((quad[:, 0] >= 0).all() and (quad[:, 0] <= k.width).all()
                and (quad[:, 1] >= 0).all() and (quad[:, 1] <= k.height).all())


def sample_offset(yaw_deg: float, roll_deg: float, depth: float, side: float,
                  k: CameraIntrinsics, rng: np.random.Generator,
                  max_tries: int = 100) -> tuple[float, float]:
    """Uniform in-plane offset keeping the projected quad fully in-image.

    Rejection-samples over the world-space box whose projection covers the
    image at the given depth; falls back to centered if no try lands.
    """
    hx = depth * (k.width / 2.0) / k.fx
    hy = depth * (k.height / 2.0) / k.fy
    for _ in range(max_tries):
        ox = float(rng.uniform(-hx, hx))
        oy = float(rng.uniform(-hy, hy))
        p = PatchPlacement(yaw_deg=yaw_deg, roll_deg=roll_deg, depth=depth,
                           offset=(ox, oy), side=side)
        if _quad_in_image(project_patch(p, k), k):
            return ox, oy
    return 0.0, 0.0


def sample_transform(dist: TransformDistribution, k: CameraIntrinsics,
                     rng: np.random.Generator) -> PatchPlacement:
    """One pose draw: yaw, roll, distance independent uniform, then location."""
    yaw = float(rng.uniform(-dist.yaw_max, dist.yaw_max))
    roll = float(rng.uniform(-dist.roll_max, dist.roll_max))
    z = float(rng.uniform(dist.z_lo, dist.z_hi))
    if dist.randomize_location:
        offset = sample_offset(yaw, roll, z, dist.side, k, rng)
    else:
        offset = (0.0, 0.0)
    return PatchPlacement(yaw_deg=yaw, roll_deg=roll, depth=z, offset=offset,
                          side=dist.side)


def eot_step(texture: np.ndarray, net, target: int, scenes: np.ndarray,
             dist: TransformDistribution, k: CameraIntrinsics,
             state: AdamState, rng: np.random.Generator) -> tuple[np.ndarray, float]:
    """One ascent step on the batch estimate of the pose-expected objective.

    Returns the clamped updated texture and the mean targeted log-prob of
    the composited batch. Degenerate poses render nothing and therefore
    contribute zero texel gradient (they still count in the mean).
    """
    if scenes.shape[0] == 0:
        raise ValueError("scene batch is empty")
    composited = []
    records = []
    for i in range(scenes.shape[0]):
        placement = sample_transform(dist, k, rng)
        img, rec = apply_patch(texture, placement, k, scenes[i])
        composited.append(img)
        records.append(rec)
    batch = np.stack(composited)
    logp, gx = net.objective_and_input_grad(batch, target)
    grad = np.zeros_like(texture)
    for i, rec in enumerate(records):
        if rec.n_pixels:
            grad += backprop_to_texture(rec, gx[i])
    new_texture = np.clip(texture + state.ascent_step(grad), 0.0, 1.0)
    return new_texture, float(logp.mean())


def optimize_patch(net, scenes: np.ndarray, target: int,
                   dist: TransformDistribution, config: AttackConfig,
                   k: CameraIntrinsics | None = None) -> Patch:
    """Run the full single-epoch optimization over n_batches steps.

    Scene minibatches are drawn with replacement; every step re-seeds its
    own stream from (config.seed, step), so the result is reproducible and
    independent of any outer RNG state.
    """
    if not 0 <= target < net.n_classes:
        raise ValueError(f"target {target} out of range [0, {net.n_classes})")
    scenes = np.asarray(scenes, dtype=float)
    if scenes.ndim != 4 or scenes.shape[0] == 0:
        raise ValueError(f"expected a nonempty (N, H, W, 3) scene array, got {scenes.shape}")
    if k is None:
        k = intrinsics_from_fov(60.0, scenes.shape[2], scenes.shape[1])

    ts = config.texture_size
    texture = np.full((ts, ts, 3), 0.5)
    state = AdamState.for_config(texture.shape, config)
    history = []
    for step in range(config.n_batches):
        rng = np.random.default_rng([config.seed, 17, step])
        idx = rng.integers(0, scenes.shape[0], size=config.batch_size)
        texture, objective = eot_step(texture, net, target, scenes[idx], dist, k,
                                      state, rng)
        history.append(objective)
    return Patch(texture=texture, target=target, dist=dist, config=config,
                 objective_history=tuple(history))


def save_patch(patch: Patch, base_path: str | Path) -> tuple[Path, Path]:
    """Write <base>.png (8-bit texture) and <base>.json (provenance)."""
    base = Path(base_path)
    png_path = base.with_suffix(".png")
    json_path = base.with_suffix(".json")
    texture_to_png(patch.texture, png_path)
    meta = {
        "format": "patchpose-patch-v1",
        "target": patch.target,
        "texture_size": list(patch.texture.shape[:2]),
        "dist": patch.dist.to_dict(),
        "config": patch.config.to_dict(),
        "objective_history": [float(v) for v in patch.objective_history],
    }
    json_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return png_path, json_path


def load_patch(base_path: str | Path) -> Patch:
    """Read a patch saved by save_patch (texture comes back 8-bit quantized)."""
    base = Path(base_path)
    meta = json.loads(base.with_suffix(".json").read_text())
    if meta.get("format") != "patchpose-patch-v1":
        raise ValueError(f"unrecognized patch file format {meta.get('format')!r}")
    texture = texture_from_png(base.with_suffix(".png"))
    return Patch(
        texture=texture,
        target=int(meta["target"]),
        dist=TransformDistribution.from_dict(meta["dist"]),
        config=AttackConfig.from_dict(meta["config"]),
        objective_history=tuple(meta.get("objective_history", ())),
    )
