"""End-to-end experiment driver.

Stages: train the classifier, rank target classes into tiers, then per
transformation family (yaw / roll / loom / grid) optimize one patch per
(training support x target class), evaluate it over the family's sweep
or grid, and aggregate per-tier summary tables and plots.

Every job's seed is derived from (master seed, stage, family, support
index, target), so jobs are order- and worker-count-independent and any
single artifact can be regenerated in isolation.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .attack import AttackConfig, Patch, TransformDistribution, optimize_patch, save_patch
from .config import ExperimentConfig, config_from_dict, config_to_dict, derive_seed
from .data import Dataset, TargetTiers, load_tiers, make_dataset, rank_target_classes, save_tiers
from .evaluation import (GridResult, GridSpec, SweepResult, SweepSpec, mast,
                         write_grid_csv, write_mast_csv, write_sweep_csv)
from .geometry import intrinsics_from_fov
from .model import TinyConvNet, accuracy, load_model, save_model, train_classifier
from .plots import LineSeries, heatmap_svg, line_plot_svg

FAMILIES = ("yaw", "roll", "loom", "grid")
_FAMILY_IDS = {"yaw": 1, "roll": 2, "loom": 3, "grid": 4}
_STAGE_PATCH = 3
_STAGE_EVAL = 4

TIER_ORDER = ("high", "mid", "low")


def _num_tag(v: float) -> str:
    return f"{v:g}".replace(".", "p").replace("-", "m")


def scene_intrinsics(cfg: ExperimentConfig):
    return intrinsics_from_fov(cfg.fov_deg, cfg.image_size, cfg.image_size)


def build_split(cfg: ExperimentConfig, split: str) -> Dataset:
    per_class = {"train": cfg.n_train_per_class, "val": cfg.n_val_per_class,
                 "attack": cfg.n_attack_per_class}[split]
    return make_dataset(per_class, cfg.seed, split=split, size=cfg.image_size,
                        n_classes=cfg.n_classes)


def model_path(out_dir: Path) -> Path:
    return Path(out_dir) / "model.ppnet"


def tiers_path(out_dir: Path) -> Path:
    return Path(out_dir) / "tiers.json"


def train_model(cfg: ExperimentConfig, out_dir: str | Path) -> tuple[TinyConvNet, dict]:
    """Train the classifier, save it and a metrics log, return both."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train = build_split(cfg, "train")
    val = build_split(cfg, "val")
    net = TinyConvNet(n_classes=cfg.n_classes, input_size=cfg.image_size)
    history = train_classifier(net, train.images, train.labels, val.images, val.labels,
                               epochs=cfg.epochs, batch_size=cfg.model_batch_size,
                               lr=cfg.model_lr, momentum=cfg.model_momentum,
                               seed=cfg.seed)
    metrics = {
        "val_accuracy": history["val_acc"][-1],
        "val_acc_curve": history["val_acc"],
        "train_loss_curve": history["train_loss"],
        "epochs": cfg.epochs,
        "seed": cfg.seed,
        "n_train": len(train),
        "n_val": len(val),
    }
    save_model(net, model_path(out))
    (out / "metrics.json").write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n")
    return net, metrics


def require_model(out_dir: str | Path) -> TinyConvNet:
    p = model_path(Path(out_dir))
    if not p.exists():
        raise FileNotFoundError(f"no model at {p}; run train-model first")
    return load_model(p)


def require_tiers(out_dir: str | Path) -> TargetTiers:
    p = tiers_path(Path(out_dir))
    if not p.exists():
        raise FileNotFoundError(f"no tiers at {p}; run rank-targets first")
    return load_tiers(p)


def rank_targets(cfg: ExperimentConfig, out_dir: str | Path,
                 net: TinyConvNet | None = None) -> TargetTiers:
    out = Path(out_dir)
    if net is None:
        net = require_model(out)
    attack = build_split(cfg, "attack")
    tiers = rank_target_classes(net, attack, seed=cfg.seed,
                                quick_batches=cfg.quick_budget_batches,
                                batch_size=cfg.attack_batch_size,
                                tier_size=cfg.tier_size, side=cfg.patch_side,
                                depth=cfg.reference_depth, fov_deg=cfg.fov_deg)
    out.mkdir(parents=True, exist_ok=True)
    save_tiers(tiers, tiers_path(out))
    return tiers


def family_supports(cfg: ExperimentConfig, family: str) -> list[dict]:
    """Per-support descriptors: display label, filename tag, distribution."""
    if family not in FAMILIES:
        raise ValueError(f"family must be one of {FAMILIES}, got {family!r}")
    ref = cfg.reference_depth
    common = dict(randomize_location=cfg.randomize_location, side=cfg.patch_side)
    out = []
    if family == "yaw":
        for s in cfg.yaw_supports:
            dist = TransformDistribution(yaw_max=s, roll_max=0.0, z_lo=ref, z_hi=ref,
                                         **common)
            out.append({"label": f"±{s:g}°", "tag": f"pm{_num_tag(s)}",
                        "dist": dist, "shade": (-s, s)})
    elif family == "roll":
        for s in cfg.roll_supports:
            dist = TransformDistribution(yaw_max=0.0, roll_max=s, z_lo=ref, z_hi=ref,
                                         **common)
            out.append({"label": f"±{s:g}°", "tag": f"pm{_num_tag(s)}",
                        "dist": dist, "shade": (-s, s)})
    elif family == "loom":
        for lo, hi in cfg.loom_supports:
            dist = TransformDistribution(yaw_max=0.0, roll_max=0.0, z_lo=lo, z_hi=hi,
                                         **common)
            out.append({"label": f"[{lo:g},{hi:g}]",
                        "tag": f"z{_num_tag(lo)}_{_num_tag(hi)}",
                        "dist": dist, "shade": (lo, hi)})
    else:
        for ys, rs in cfg.grid_supports:
            dist = TransformDistribution(yaw_max=ys, roll_max=rs, z_lo=ref, z_hi=ref,
                                         **common)
            out.append({"label": f"±{ys:g}°×±{rs:g}°",
                        "tag": f"y{_num_tag(ys)}_r{_num_tag(rs)}",
                        "dist": dist, "shade": None})
    return out


def sweep_spec_for(cfg: ExperimentConfig, family: str, seed: int) -> SweepSpec:
    ranges = {"yaw": cfg.yaw_sweep, "roll": cfg.roll_sweep, "loom": cfg.loom_sweep}
    alpha, beta = ranges[family]
    return SweepSpec(kind=family, alpha=alpha, beta=beta,
                     n_intervals=cfg.sweep_intervals,
                     images_per_point=cfg.images_per_point,
                     depth=cfg.reference_depth, side=cfg.patch_side,
                     randomize_location=cfg.randomize_location,
                     n_classes=cfg.n_classes, image_size=cfg.image_size,
                     fov_deg=cfg.fov_deg, seed=seed)


def grid_spec_for(cfg: ExperimentConfig, seed: int) -> GridSpec:
    return GridSpec(yaw_alpha=cfg.grid_yaw_range[0], yaw_beta=cfg.grid_yaw_range[1],
                    roll_alpha=cfg.grid_roll_range[0], roll_beta=cfg.grid_roll_range[1],
                    n_yaw=cfg.grid_intervals, n_roll=cfg.grid_intervals,
                    images_per_point=cfg.grid_images_per_point,
                    depth=cfg.reference_depth, side=cfg.patch_side,
                    randomize_location=cfg.randomize_location,
                    n_classes=cfg.n_classes, image_size=cfg.image_size,
                    fov_deg=cfg.fov_deg, seed=seed)


def plan_family(cfg: ExperimentConfig, family: str, n_targets: int) -> dict:
    """Dry-run arithmetic: how much work the family run will do."""
    n_supports = len(family_supports(cfg, family))
    n_opt = n_supports * n_targets
    if family == "grid":
        points = (cfg.grid_intervals + 1) ** 2
        per_point = cfg.grid_images_per_point
    else:
        points = cfg.sweep_intervals + 1
        per_point = cfg.images_per_point
    return {
        "family": family,
        "n_supports": n_supports,
        "n_targets": n_targets,
        "n_optimizations": n_opt,
        "optimization_images": n_opt * cfg.attack_batches * cfg.attack_batch_size,
        "eval_points_per_patch": points,
        "images_per_point": per_point,
        "n_classifier_evals": n_opt * points * per_point,
    }


def _patch_seed(cfg: ExperimentConfig, family: str, support_idx: int, target: int) -> int:
    return derive_seed(cfg.seed, _STAGE_PATCH, _FAMILY_IDS[family], support_idx, target)


def _eval_seed(cfg: ExperimentConfig, family: str, support_idx: int, target: int) -> int:
    return derive_seed(cfg.seed, _STAGE_EVAL, _FAMILY_IDS[family], support_idx, target)


def train_one_patch(cfg: ExperimentConfig, family: str, support_idx: int, target: int,
                    net: TinyConvNet, attack_scenes: np.ndarray) -> Patch:
    sup = family_supports(cfg, family)[support_idx]
    acfg = AttackConfig(n_batches=cfg.attack_batches, batch_size=cfg.attack_batch_size,
                        lr=cfg.attack_lr, texture_size=cfg.texture_size,
                        seed=_patch_seed(cfg, family, support_idx, target))
    return optimize_patch(net, attack_scenes, target, sup["dist"], acfg,
                          k=scene_intrinsics(cfg))


def _evaluate_patch(cfg: ExperimentConfig, family: str, support_idx: int,
                    target: int, patch: Patch, net: TinyConvNet):
    from .evaluation import run_grid, run_sweep

    seed = _eval_seed(cfg, family, support_idx, target)
    if family == "grid":
        return run_grid(patch, net, grid_spec_for(cfg, seed))
    return run_sweep(patch, net, sweep_spec_for(cfg, family, seed))


def _family_job(payload: tuple, net: TinyConvNet | None = None,
                attack_scenes: np.ndarray | None = None) -> tuple:
    """One (support, target) unit: optimize, then sweep or grid.

    Top-level so process pools can pickle it; pool workers rebuild their
    own net and attack split (payload only), which is cheap and keeps
    jobs fully independent; the sequential path injects shared ones.
    """
    cfg_doc, family, support_idx, target, model_file, do_eval = payload
    cfg = config_from_dict(cfg_doc)
    if net is None:
        net = load_model(model_file)
    if attack_scenes is None:
        attack_scenes = build_split(cfg, "attack").images
    patch = train_one_patch(cfg, family, support_idx, target, net, attack_scenes)
    result = None
    if do_eval:
        result = _evaluate_patch(cfg, family, support_idx, target, patch, net)
    return support_idx, target, patch, result


def _run_jobs(payloads: list[tuple], jobs: int, net: TinyConvNet | None,
              attack_scenes: np.ndarray | None) -> list[tuple]:
    if jobs > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(payloads))) as pool:
            results = list(pool.map(_family_job, payloads))
    else:
        results = [_family_job(p, net, attack_scenes) for p in payloads]
    return sorted(results, key=lambda r: (r[0], r[1]))


def _tier_rows(tiers: TargetTiers) -> list[tuple[str, tuple[int, ...]]]:
    rows = [("high", tiers.high), ("mid", tiers.mid), ("low", tiers.low)]
    return [(name, members) for name, members in rows if members]


def write_mast_table(mast_rows: list[dict], support_labels: list[str],
                     tiers: TargetTiers, path: Path) -> None:
    """Tier x support table of tier-mean values (rows = tiers)."""
    import csv as _csv

    by_key = {(r["train_support"], r["target_class"]): r["mast"] for r in mast_rows}
    with open(path, "w", newline="") as f:
        w = _csv.writer(f)
        w.writerow(["tier"] + support_labels)
        for tier_name, members in _tier_rows(tiers):
            row = [tier_name]
            for label in support_labels:
                vals = [by_key[(label, t)] for t in members if (label, t) in by_key]
                row.append(repr(float(np.mean(vals))) if vals else "")
            w.writerow(row)


def run_family(cfg: ExperimentConfig, family: str, out_dir: str | Path, *,
               jobs: int = 1, dry_run: bool = False,
               tiers: TargetTiers | None = None,
               train_only: bool = False, reuse_patches: bool = False) -> dict:
    """Run (or plan) every (support x target) job of one family.

    Writes patches, per-patch CSVs, the per-family mast tables, and SVG
    plots under out_dir/<family>/. Returns a summary with actual counters.
    """
    out = Path(out_dir)
    if tiers is None:
        tiers = require_tiers(out)
    targets = list(tiers.all_targets())
    supports = family_supports(cfg, family)
    plan = plan_family(cfg, family, len(targets))
    if dry_run:
        return {"plan": plan, "dry_run": True}

    net = require_model(out)
    fam_dir = out / family
    patch_dir = fam_dir / "patches"
    eval_dir = fam_dir / ("grids" if family == "grid" else "sweeps")
    plot_dir = fam_dir / "plots"
    for d in (patch_dir, eval_dir, plot_dir):
        d.mkdir(parents=True, exist_ok=True)

    cfg_doc = config_to_dict(cfg)
    model_file = str(model_path(out))
    do_eval = not train_only

    if reuse_patches:
        results = _reuse_patch_results(cfg, family, supports, targets, net, patch_dir,
                                       do_eval)
    else:
        payloads = [
            (cfg_doc, family, si, t, model_file, do_eval)
            for si in range(len(supports)) for t in targets
        ]
        attack_scenes = None if jobs > 1 else build_split(cfg, "attack").images
        results = _run_jobs(payloads, jobs, net, attack_scenes)
        for si, target, patch, _ in results:
            save_patch(patch, patch_dir / f"{supports[si]['tag']}__t{target}")

    summary = {"plan": plan, "n_patches": len(results), "actual_classifier_evals": 0}
    if train_only:
        return summary

    for si, target, _, result in results:
        tag = f"{supports[si]['tag']}__t{target}"
        if family == "grid":
            write_grid_csv(result, eval_dir / f"{tag}.csv")
            summary["actual_classifier_evals"] += int(result.rates.size
                                                      * result.spec.images_per_point)
        else:
            write_sweep_csv(result, eval_dir / f"{tag}.csv")
            summary["actual_classifier_evals"] += int(result.points.size
                                                      * result.spec.images_per_point)

    if family == "grid":
        _emit_grid_plots(supports, targets, tiers, results, plot_dir)
    else:
        mast_rows = _emit_mast(cfg, family, supports, tiers, results, fam_dir)
        _emit_sweep_plots(family, supports, tiers, results, plot_dir)
        summary["mast_rows"] = mast_rows
    summary["results"] = results
    return summary


def _reuse_patch_results(cfg, family, supports, targets, net, patch_dir: Path,
                         do_eval: bool) -> list[tuple]:
    from .attack import load_patch

    results = []
    for si in range(len(supports)):
        for target in targets:
            base = patch_dir / f"{supports[si]['tag']}__t{target}"
            if not base.with_suffix(".png").exists():
                raise FileNotFoundError(
                    f"no patch at {base}.png; run train-patch for family {family} first")
            patch = load_patch(base)
            result = None
            if do_eval:
                result = _evaluate_patch(cfg, family, si, target, patch, net)
            results.append((si, target, patch, result))
    return results


def _emit_mast(cfg, family, supports, tiers, results, fam_dir: Path) -> list[dict]:
    mast_rows = []
    for si, sup in enumerate(supports):
        sweeps = [r for (i, _t, _p, r) in results if i == si]
        report = mast({r.target: r for r in sweeps})
        for target, value in sorted(report.per_class.items()):
            mast_rows.append({
                "target_class": target,
                "tier": tiers.tier_of(target),
                "train_support": sup["label"],
                "mast": value,
            })
    write_mast_csv(mast_rows, fam_dir / "mast.csv")
    write_mast_table(mast_rows, [s["label"] for s in supports], tiers,
                     fam_dir / "mast_table.csv")
    return mast_rows


def _tier_mean_curve(results: list[tuple], si: int, members: tuple[int, ...]):
    curves = [r.rates for (i, t, _, r) in results if i == si and t in members]
    if not curves:
        return None
    points = next(r.points for (i, t, _, r) in results if i == si and t in members)
    return points, np.mean(curves, axis=0)


def _emit_sweep_plots(family, supports, tiers, results, plot_dir: Path) -> None:
    xlabel = {"yaw": "yaw (degrees)", "roll": "roll (degrees)",
              "loom": "camera distance (world units)"}[family]
    for tier_name, members in _tier_rows(tiers):
        series = []
        for si, sup in enumerate(supports):
            curve = _tier_mean_curve(results, si, members)
            if curve is None:
                continue
            points, rates = curve
            series.append(LineSeries(label=f"support {sup['label']}", xs=points,
                                     ys=rates, shade=sup["shade"]))
        if not series:
            continue
        svg = line_plot_svg(series, title=f"{family} sweep, {tier_name} tier",
                            xlabel=xlabel)
        (plot_dir / f"{family}_{tier_name}.svg").write_text(svg)


def _emit_grid_plots(supports, targets, tiers, results, plot_dir: Path) -> None:
    for si, sup in enumerate(supports):
        grids = {t: r for (i, t, _, r) in results if i == si}
        for tier_name, members in _tier_rows(tiers):
            mats = [grids[t].rates for t in members if t in grids]
            if not mats:
                continue
            any_grid = next(grids[t] for t in members if t in grids)
            mean_rates = np.mean(mats, axis=0)
            svg = heatmap_svg(mean_rates, any_grid.yaws, any_grid.rolls,
                              title=f"grid, support {sup['label']}, {tier_name} tier",
                              xlabel="yaw (degrees)", ylabel="roll (degrees)")
            (plot_dir / f"grid_{sup['tag']}_{tier_name}.svg").write_text(svg)
