"""Procedural scene generator and dataset plumbing.

Scenes are single colored glyphs (half, wedge, hook, tee) over a smooth
random grayscale background, plus zero to two thin saturated-color
distractor bars drawn behind the glyph. Class id encodes shape and
color: shape = class // 3, color = class % 3, so 12 classes total by
default. The distractors force the classifier to treat small or thin
regions of saturated color as noise rather than class evidence; only
glyph-scale colored structure may count.

The background field, the glyph jitter, and the distractors are drawn
from streams keyed only on the scene seed, never on the class, so two
scenes rendered with the same seed but different classes differ only
inside the glyph.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

N_CLASSES = 12

SHAPES = ("half", "wedge", "hook", "tee")
COLORS = (
    np.array([0.9, 0.15, 0.15]),
    np.array([0.15, 0.65, 0.2]),
    np.array([0.2, 0.3, 0.9]),
)


def class_shape(class_id: int) -> str:
    return SHAPES[class_id // 3]


def class_color(class_id: int) -> np.ndarray:
    return COLORS[class_id % 3]


def _upsample(grid: np.ndarray, size: int) -> np.ndarray:
    """Bilinearly upsample a small (g, g, c) grid to (size, size, c)."""
    g = grid.shape[0]
    t = (np.arange(size) + 0.5) / size * (g - 1)
    i0 = np.clip(np.floor(t).astype(int), 0, g - 2)
    f = t - i0
    a = grid[i0][:, i0]
    b = grid[i0][:, i0 + 1]
    c = grid[i0 + 1][:, i0]
    d = grid[i0 + 1][:, i0 + 1]
    fy = f[:, None, None]
    fx = f[None, :, None]
    return (a * (1 - fy) * (1 - fx) + b * (1 - fy) * fx
            + c * fy * (1 - fx) + d * fy * fx)


def _soft_edge(dist: np.ndarray) -> np.ndarray:
    """1 inside (dist<=0), 0 outside (dist>=1), linear ramp between."""
    return np.clip(1.0 - dist, 0.0, 1.0)


def _rect_dist(px, py, rcx: float, rcy: float, hw: float, hh: float) -> np.ndarray:
    return np.maximum(np.abs(px - rcx) - hw, np.abs(py - rcy) - hh)


def _glyph_alpha(shape: str, size: int, cx: float, cy: float, radius: float) -> np.ndarray:
    """Every shape is rotationally asymmetric on purpose: a glyph that maps
    onto itself under some rotation would make roll a partial no-op for
    patches targeting its class."""
    ys, xs = np.mgrid[0:size, 0:size]
    px = xs + 0.5
    py = ys + 0.5
    w = 0.55 * radius  # stroke width of the bar glyphs
    if shape == "half":
        # half-disk, flat edge through the center
        d = np.maximum(np.hypot(px - cx, py - cy) - radius, py - cy)
        return _soft_edge(d)
    if shape == "wedge":
        # right triangle, right angle at the bottom-left corner
        vx = np.array([cx - radius, cx + radius, cx - radius])
        vy = np.array([cy - radius, cy + radius, cy + radius])
        d = np.full((size, size), -np.inf)
        for i in range(3):
            j = (i + 1) % 3
            ex, ey = vx[j] - vx[i], vy[j] - vy[i]
            norm = np.hypot(ex, ey)
            # inward-positive signed distance to each edge line
            side = ((px - vx[i]) * ey - (py - vy[i]) * ex) / norm
            d = np.maximum(d, side)
        return _soft_edge(d)
    if shape == "hook":
        # L: vertical bar on the left, horizontal bar along the bottom
        vert = _rect_dist(px, py, cx - radius + w / 2, cy, w / 2, radius)
        horiz = _rect_dist(px, py, cx, cy + radius - w / 2, radius, w / 2)
        return _soft_edge(np.minimum(vert, horiz))
    if shape == "tee":
        # T: horizontal bar along the top, stem down the middle
        bar = _rect_dist(px, py, cx, cy - radius + w / 2, radius, w / 2)
        stem = _rect_dist(px, py, cx, cy, w / 2, radius)
        return _soft_edge(np.minimum(bar, stem))
    raise ValueError(f"unknown shape {shape!r}")


def _bar_alpha(size: int, cx: float, cy: float, length: float, width: float,
               angle: float) -> np.ndarray:
    """Soft-edged rotated bar; the distractor primitive."""
    ys, xs = np.mgrid[0:size, 0:size]
    px = xs + 0.5 - cx
    py = ys + 0.5 - cy
    c, s = np.cos(angle), np.sin(angle)
    u = px * c + py * s
    v = -px * s + py * c
    return _soft_edge(np.maximum(np.abs(u) - length / 2, np.abs(v) - width / 2))


def render_scene(class_id: int, seed: int, size: int = 64) -> np.ndarray:
    """One (size, size, 3) float image in [0, 1] for the given class."""
    if not 0 <= class_id < N_CLASSES:
        raise ValueError(f"class_id {class_id} out of range [0, {N_CLASSES})")
    bg_rng = np.random.default_rng([seed, 11])
    # gray background keeps color a clean glyph cue
    coarse = bg_rng.uniform(0.2, 0.8, size=(5, 5, 1)) * np.ones((1, 1, 3))
    image = _upsample(coarse, size)

    # thin colored bars behind the glyph: saturated color alone, at small
    # area or stroke width, must never be readable as class evidence
    bars = np.random.default_rng([seed, 17])
    for _ in range(int(bars.integers(0, 3))):
        alpha = _bar_alpha(size,
                           cx=bars.uniform(0, size), cy=bars.uniform(0, size),
                           length=bars.uniform(12.0, 40.0) * size / 64,
                           width=bars.uniform(2.0, 7.0) * size / 64,
                           angle=bars.uniform(0.0, np.pi))[..., None]
        color = COLORS[int(bars.integers(0, len(COLORS)))]
        image = (1.0 - alpha) * image + alpha * color

    jit = np.random.default_rng([seed, 13])
    cx = (0.5 + jit.uniform(-0.12, 0.12)) * size
    cy = (0.5 + jit.uniform(-0.12, 0.12)) * size
    radius = jit.uniform(0.20, 0.30) * size

    alpha = _glyph_alpha(class_shape(class_id), size, cx, cy, radius)[..., None]
    color = class_color(class_id)
    return np.clip((1.0 - alpha) * image + alpha * color, 0.0, 1.0)


@dataclass
class Dataset:
    images: np.ndarray
    labels: np.ndarray
    seeds: np.ndarray

    def __len__(self) -> int:
        return int(self.labels.shape[0])


# Scene seeds carry their split in the low two bits, so the four seed
# spaces (classifier train/val, attack-train, evaluation) are disjoint
# by arithmetic construction, not by bookkeeping.
SPLIT_LANES = {"train": 0, "val": 1, "attack": 2}
EVAL_LANE = 3


def eval_scene_seed(index: int) -> int:
    """Seed for the evaluation lane; disjoint from every dataset split."""
    return 4 * int(index) + EVAL_LANE


def make_dataset(n_per_class: int, seed: int, *, split: str = "train",
                 size: int = 64, n_classes: int = N_CLASSES) -> Dataset:
    """Balanced dataset with split-disjoint scene seeds.

    Scene seed = 4*(seed*1_000_003 + class*n_per_class + k) + lane(split).
    """
    if split not in SPLIT_LANES:
        raise ValueError(f"split must be one of {sorted(SPLIT_LANES)}, got {split!r}")
    if n_per_class <= 0:
        raise ValueError(f"n_per_class must be positive, got {n_per_class}")
    lane = SPLIT_LANES[split]
    base = seed * 1_000_003
    n = n_per_class * n_classes
    images = np.zeros((n, size, size, 3))
    labels = np.zeros(n, dtype=int)
    seeds = np.zeros(n, dtype=int)
    i = 0
    for cls in range(n_classes):
        for k in range(n_per_class):
            s = 4 * (base + cls * n_per_class + k) + lane
            images[i] = render_scene(cls, s, size)
            labels[i] = cls
            seeds[i] = s
            i += 1
    return Dataset(images=images, labels=labels, seeds=seeds)


def export_dataset(ds: Dataset, out_dir: str | Path) -> None:
    """PNG per image plus a manifest.json with labels and seeds."""
    from .render import texture_to_png

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(len(ds)):
        name = f"scene_{i:05d}.png"
        texture_to_png(ds.images[i], out / name)
        entries.append({"file": name, "label": int(ds.labels[i]), "seed": int(ds.seeds[i])})
    manifest = {"n_images": len(ds), "images": entries}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def import_dataset(in_dir: str | Path) -> Dataset:
    """Inverse of export_dataset (images come back 8-bit quantized)."""
    from .render import texture_from_png

    src = Path(in_dir)
    manifest = json.loads((src / "manifest.json").read_text())
    entries = manifest["images"]
    images = np.stack([texture_from_png(src / e["file"]) for e in entries])
    labels = np.array([e["label"] for e in entries], dtype=int)
    seeds = np.array([e["seed"] for e in entries], dtype=int)
    return Dataset(images=images, labels=labels, seeds=seeds)


@dataclass(frozen=True)
class TargetTiers:
    """Targets bucketed by how easy they are to hit fronto-parallel."""

    high: tuple[int, ...]
    mid: tuple[int, ...]
    low: tuple[int, ...]
    scores: tuple[float, ...]

    def tier_of(self, class_id: int) -> str:
        if class_id in self.high:
            return "high"
        if class_id in self.mid:
            return "mid"
        if class_id in self.low:
            return "low"
        return "dropped"

    def all_targets(self) -> tuple[int, ...]:
        return self.high + self.mid + self.low


def bucket_ranked(ranked: list[int], scores: tuple[float, ...] = (),
                  tier_size: int = 3) -> TargetTiers:
    """Top / centered middle / bottom tier_size of a descending ranking."""
    n = len(ranked)
    if n < 3 * tier_size:
        raise ValueError(f"need at least {3 * tier_size} ranked classes, got {n}")
    mid_start = (n - tier_size) // 2
    return TargetTiers(
        high=tuple(ranked[:tier_size]),
        mid=tuple(ranked[mid_start:mid_start + tier_size]),
        low=tuple(ranked[-tier_size:]),
        scores=tuple(scores),
    )


def rank_target_classes(net, dataset: Dataset, *, seed: int,
                        quick_batches: int = 25, batch_size: int = 32,
                        n_eval: int = 128, tier_size: int = 3,
                        side: float = 2.0, depth: float = 7.0,
                        fov_deg: float = 60.0) -> TargetTiers:
    """Bucket classes into high/mid/low tiers by quick-attack success.

    Runs a short fronto-parallel patch optimization per candidate class
    against the given (attack-split) dataset and scores it by targeted
    success at the centered reference pose on fresh evaluation scenes.
    Refuses to rank against a net that cannot even classify the dataset
    (accuracy < 0.5), since tier order would be meaningless noise.
    """
    from .attack import AttackConfig, TransformDistribution, optimize_patch
    from .geometry import PatchPlacement, intrinsics_from_fov
    from .model import accuracy
    from .render import apply_patch

    acc = accuracy(net, dataset.images, dataset.labels)
    if acc < 0.5:
        raise ValueError(
            f"refusing to rank targets: net accuracy {acc:.3f} on the ranking dataset "
            "is below 0.5 (untrained?)"
        )

    attack_scenes = dataset.images
    size = attack_scenes.shape[1]
    k = intrinsics_from_fov(fov_deg, size, size)
    dist = TransformDistribution(yaw_max=0.0, roll_max=0.0, z_lo=depth, z_hi=depth,
                                 randomize_location=True, side=side)
    reference = PatchPlacement(yaw_deg=0.0, roll_deg=0.0, depth=depth, side=side)

    eval_rng = np.random.default_rng([seed, 7])
    eval_idx = eval_rng.integers(0, 2 ** 40, size=n_eval)
    eval_classes = eval_rng.integers(0, N_CLASSES, size=n_eval)
    eval_scenes = np.stack([
        render_scene(int(c), eval_scene_seed(int(u)), size)
        for c, u in zip(eval_classes, eval_idx)
    ])

    scores = []
    for cls in range(N_CLASSES):
        cfg = AttackConfig(n_batches=quick_batches, batch_size=batch_size,
                           seed=seed * 1_000_003 + cls)
        patch = optimize_patch(net, attack_scenes, cls, dist, cfg, k=k)
        hits = 0
        for start in range(0, n_eval, 64):
            chunk = eval_scenes[start:start + 64]
            patched = np.stack([apply_patch(patch.texture, reference, k, s)[0] for s in chunk])
            hits += int((net.predict(patched) == cls).sum())
        scores.append(hits / n_eval)

    order = sorted(range(N_CLASSES), key=lambda c: (-scores[c], c))
    return bucket_ranked(order, scores=tuple(scores), tier_size=tier_size)


def save_tiers(tiers: TargetTiers, path: str | Path) -> None:
    doc = {
        "high": list(tiers.high),
        "mid": list(tiers.mid),
        "low": list(tiers.low),
        "scores": list(tiers.scores),
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_tiers(path: str | Path) -> TargetTiers:
    doc = json.loads(Path(path).read_text())
    return TargetTiers(
        high=tuple(int(c) for c in doc["high"]),
        mid=tuple(int(c) for c in doc["mid"]),
        low=tuple(int(c) for c in doc["low"]),
        scores=tuple(float(s) for s in doc.get("scores", ())),
    )
