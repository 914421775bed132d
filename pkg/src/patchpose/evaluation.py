"""Attack-success measurement over pose sweeps and grids.

A sweep varies one pose parameter (yaw, roll, or loom distance) over
[alpha, beta] at n_intervals+1 uniformly spaced endpoint samples and
measures targeted success at each; a grid does the same over a yaw x
roll lattice. The summary metric is the class-averaged, range-normalized
trapezoidal integral of the success curve (a number in [0, 1]).

Scenes at each sample point are drawn deterministically from the
evaluation seed lane by (seed, point index), so any subset of points can
be recomputed independently and results do not depend on evaluation
order or worker count.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .attack import Patch, sample_offset
from .data import N_CLASSES, eval_scene_seed, render_scene
from .geometry import CameraIntrinsics, PatchPlacement, intrinsics_from_fov
from .render import apply_patch

SWEEP_KINDS = ("yaw", "roll", "loom")

SWEEP_CSV_HEADER = ["param_kind", "target_class", "phi", "success_rate", "n_images", "seed"]
GRID_CSV_HEADER = ["yaw", "roll", "target_class", "success_rate", "n_images", "seed"]
MAST_CSV_HEADER = ["target_class", "tier", "train_support", "mast"]

_PREDICT_CHUNK = 64


@dataclass(frozen=True)
class SweepSpec:
    kind: str
    alpha: float
    beta: float
    n_intervals: int = 60
    images_per_point: int = 320
    yaw_deg: float = 0.0
    roll_deg: float = 0.0
    depth: float = 7.0
    side: float = 2.0
    randomize_location: bool = True
    n_classes: int = N_CLASSES
    image_size: int = 64
    fov_deg: float = 60.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in SWEEP_KINDS:
            raise ValueError(f"kind must be one of {SWEEP_KINDS}, got {self.kind!r}")
        if not self.alpha < self.beta:
            raise ValueError(f"need alpha < beta, got [{self.alpha}, {self.beta}]")
        if self.n_intervals < 1:
            raise ValueError(f"n_intervals must be >= 1, got {self.n_intervals}")
        if self.images_per_point < 1:
            raise ValueError(f"images_per_point must be >= 1, got {self.images_per_point}")
        if self.kind == "loom" and self.alpha <= 0:
            raise ValueError(f"loom distances must be positive, got alpha={self.alpha}")

    def points(self) -> np.ndarray:
        return np.linspace(self.alpha, self.beta, self.n_intervals + 1)

    def placement_at(self, phi: float) -> PatchPlacement:
        yaw, roll, depth = self.yaw_deg, self.roll_deg, self.depth
        if self.kind == "yaw":
            yaw = phi
        elif self.kind == "roll":
            roll = phi
        else:
            depth = phi
        return PatchPlacement(yaw_deg=yaw, roll_deg=roll, depth=depth, side=self.side)

    def intrinsics(self) -> CameraIntrinsics:
        return intrinsics_from_fov(self.fov_deg, self.image_size, self.image_size)

    def quadrature_key(self) -> tuple:
        """The fields that must agree for curves to be averaged together."""
        return (self.kind, self.alpha, self.beta, self.n_intervals,
                self.images_per_point)


@dataclass
class SweepResult:
    spec: SweepSpec
    target: int
    points: np.ndarray
    rates: np.ndarray


@dataclass(frozen=True)
class GridSpec:
    yaw_alpha: float = -180.0
    yaw_beta: float = 180.0
    roll_alpha: float = -360.0
    roll_beta: float = 360.0
    n_yaw: int = 20
    n_roll: int = 20
    images_per_point: int = 320
    depth: float = 7.0
    side: float = 2.0
    randomize_location: bool = True
    n_classes: int = N_CLASSES
    image_size: int = 64
    fov_deg: float = 60.0
    seed: int = 0

    def __post_init__(self):
        if not (self.yaw_alpha < self.yaw_beta and self.roll_alpha < self.roll_beta):
            raise ValueError("grid ranges must be nonempty")
        if self.n_yaw < 1 or self.n_roll < 1:
            raise ValueError("grid needs at least one interval per axis")
        if self.images_per_point < 1:
            raise ValueError(f"images_per_point must be >= 1, got {self.images_per_point}")

    def yaws(self) -> np.ndarray:
        return np.linspace(self.yaw_alpha, self.yaw_beta, self.n_yaw + 1)

    def rolls(self) -> np.ndarray:
        return np.linspace(self.roll_alpha, self.roll_beta, self.n_roll + 1)

    def intrinsics(self) -> CameraIntrinsics:
        return intrinsics_from_fov(self.fov_deg, self.image_size, self.image_size)


@dataclass
class GridResult:
    """rates[i, j] = success at roll=rolls[i], yaw=yaws[j] (yaw varies along rows)."""

    spec: GridSpec
    target: int
    yaws: np.ndarray
    rolls: np.ndarray
    rates: np.ndarray


@dataclass
class MastReport:
    kind: str
    alpha: float
    beta: float
    per_class: dict

    def mean(self) -> float:
        return float(np.mean(list(self.per_class.values())))


def _draw_scenes(rng: np.random.Generator, n: int, n_classes: int, size: int) -> np.ndarray:
    classes = rng.integers(0, n_classes, size=n)
    indices = rng.integers(0, 2 ** 40, size=n)
    return np.stack([
        render_scene(int(c), eval_scene_seed(int(u)), size)
        for c, u in zip(classes, indices)
    ])


def _predict_chunked(net, batch: np.ndarray) -> np.ndarray:
    preds = [net.predict(batch[s:s + _PREDICT_CHUNK])
             for s in range(0, batch.shape[0], _PREDICT_CHUNK)]
    return np.concatenate(preds)


def success_rate(patch: Patch, net, scenes: np.ndarray, placement: PatchPlacement,
                 k: CameraIntrinsics, *, randomize_location: bool = False,
                 rng: np.random.Generator | None = None) -> float:
    """Fraction of scenes the patched image is classified as the target.

    With randomize_location, each scene gets its own in-image offset draw
    (pose angles and depth stay fixed); success is counted on all scenes
    regardless of their clean-image prediction.
    """
    scenes = np.asarray(scenes, dtype=float)
    if scenes.ndim != 4 or scenes.shape[0] == 0:
        raise ValueError(f"expected a nonempty (N, H, W, 3) scene array, got {scenes.shape}")
    if randomize_location and rng is None:
        raise ValueError("randomize_location requires an rng")
    patched = np.empty_like(scenes)
    for i in range(scenes.shape[0]):
        p = placement
        if randomize_location:
            off = sample_offset(p.yaw_deg, p.roll_deg, p.depth, p.side, k, rng)
            p = replace(p, offset=off)
        patched[i] = apply_patch(patch.texture, p, k, scenes[i])[0]
    preds = _predict_chunked(net, patched)
    return float((preds == patch.target).mean())


def run_sweep(patch: Patch, net, spec: SweepSpec) -> SweepResult:
    """Evaluate success at every sample point of the sweep."""
    k = spec.intrinsics()
    points = spec.points()
    rates = np.zeros(points.shape[0])
    for i, phi in enumerate(points):
        rng = np.random.default_rng([spec.seed, 29, i])
        scenes = _draw_scenes(rng, spec.images_per_point, spec.n_classes, spec.image_size)
        rates[i] = success_rate(patch, net, scenes, spec.placement_at(float(phi)), k,
                                randomize_location=spec.randomize_location, rng=rng)
    return SweepResult(spec=spec, target=patch.target, points=points, rates=rates)


def run_grid(patch: Patch, net, spec: GridSpec) -> GridResult:
    """Evaluate success over the (roll x yaw) endpoint lattice."""
    k = spec.intrinsics()
    yaws = spec.yaws()
    rolls = spec.rolls()
    rates = np.zeros((rolls.shape[0], yaws.shape[0]))
    for i, roll in enumerate(rolls):
        for j, yaw in enumerate(yaws):
            rng = np.random.default_rng([spec.seed, 31, i, j])
            scenes = _draw_scenes(rng, spec.images_per_point, spec.n_classes,
                                  spec.image_size)
            placement = PatchPlacement(yaw_deg=float(yaw), roll_deg=float(roll),
                                       depth=spec.depth, side=spec.side)
            rates[i, j] = success_rate(patch, net, scenes, placement, k,
                                       randomize_location=spec.randomize_location,
                                       rng=rng)
    return GridResult(spec=spec, target=patch.target, yaws=yaws, rolls=rolls,
                      rates=rates)


def mast_of_curve(points: np.ndarray, rates: np.ndarray) -> float:
    """Range-normalized trapezoidal integral of one success curve."""
    points = np.asarray(points, dtype=float)
    rates = np.asarray(rates, dtype=float)
    if points.shape != rates.shape or points.ndim != 1 or points.shape[0] < 2:
        raise ValueError("need matching 1D arrays of at least 2 samples")
    return float(np.trapezoid(rates, points) / (points[-1] - points[0]))


def mast(results: dict[int, SweepResult] | list[SweepResult]) -> MastReport:
    """Per-class range-normalized success integrals for one shared sweep spec.

    All curves must share the sweep geometry (kind, range, intervals,
    images per point); per-class seeds may differ.
    """
    if isinstance(results, dict):
        items = list(results.values())
    else:
        items = list(results)
    if not items:
        raise ValueError("no sweep results given")
    key = items[0].spec.quadrature_key()
    for r in items[1:]:
        if r.spec.quadrature_key() != key:
            raise ValueError(
                f"sweep specs disagree: {r.spec.quadrature_key()} vs {key}"
            )
    per_class = {}
    for r in items:
        if r.target in per_class:
            raise ValueError(f"duplicate sweep result for target {r.target}")
        per_class[r.target] = mast_of_curve(r.points, r.rates)
    spec = items[0].spec
    return MastReport(kind=spec.kind, alpha=spec.alpha, beta=spec.beta,
                      per_class=per_class)


def write_sweep_csv(results: list[SweepResult] | SweepResult, path: str | Path) -> None:
    if isinstance(results, SweepResult):
        results = [results]
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(SWEEP_CSV_HEADER)
        for r in results:
            for phi, rate in zip(r.points, r.rates):
                w.writerow([r.spec.kind, r.target, repr(float(phi)),
                            repr(float(rate)), r.spec.images_per_point, r.spec.seed])


def read_sweep_csv(path: str | Path) -> list[dict]:
    """Rows of a sweep CSV as typed dicts; raises naming the bad row."""
    rows = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != SWEEP_CSV_HEADER:
            raise ValueError(f"{path}: bad sweep header {header}")
        for lineno, row in enumerate(reader, start=2):
            try:
                rows.append({
                    "param_kind": row[0],
                    "target_class": int(row[1]),
                    "phi": float(row[2]),
                    "success_rate": float(row[3]),
                    "n_images": int(row[4]),
                    "seed": int(row[5]),
                })
            except (ValueError, IndexError) as e:
                raise ValueError(f"{path}: malformed sweep row {lineno}: {row}") from e
    if not rows:
        raise ValueError(f"{path}: sweep CSV has no data rows")
    return rows


def write_grid_csv(result: GridResult, path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(GRID_CSV_HEADER)
        for i, roll in enumerate(result.rolls):
            for j, yaw in enumerate(result.yaws):
                w.writerow([repr(float(yaw)), repr(float(roll)), result.target,
                            repr(float(result.rates[i, j])),
                            result.spec.images_per_point, result.spec.seed])


def read_grid_csv(path: str | Path) -> list[dict]:
    rows = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != GRID_CSV_HEADER:
            raise ValueError(f"{path}: bad grid header {header}")
        for lineno, row in enumerate(reader, start=2):
            try:
                rows.append({
                    "yaw": float(row[0]),
                    "roll": float(row[1]),
                    "target_class": int(row[2]),
                    "success_rate": float(row[3]),
                    "n_images": int(row[4]),
                    "seed": int(row[5]),
                })
            except (ValueError, IndexError) as e:
                raise ValueError(f"{path}: malformed grid row {lineno}: {row}") from e
    if not rows:
        raise ValueError(f"{path}: grid CSV has no data rows")
    return rows


def write_mast_csv(rows: list[dict], path: str | Path) -> None:
    """Rows:  {target_class, tier, train_support, mast}."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(MAST_CSV_HEADER)
        for r in rows:
            w.writerow([r["target_class"], r["tier"], r["train_support"],
                        repr(float(r["mast"]))])


def read_mast_csv(path: str | Path) -> list[dict]:
    rows = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != MAST_CSV_HEADER:
            raise ValueError(f"{path}: bad header {header}")
        for lineno, row in enumerate(reader, start=2):
            try:
                rows.append({
                    "target_class": int(row[0]),
                    "tier": row[1],
                    "train_support": row[2],
                    "mast": float(row[3]),
                })
            except (ValueError, IndexError) as e:
                raise ValueError(f"{path}: malformed row {lineno}: {row}") from e
    if not rows:
        raise ValueError(f"{path}: CSV has no data rows")
    return rows
