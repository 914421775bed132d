"""Command-line driver.

Subcommands map to pipeline stages: train-model, rank-targets,
train-patch, sweep, grid, report, plot. Every subcommand accepts
--config/--seed/--out/--jobs/--dry-run; flags override config fields.
Exit codes: 0 success, 1 runtime failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .config import ConfigError, ExperimentConfig, load_config
from .experiment import (FAMILIES, build_split, family_supports, plan_family,
                         rank_targets, require_model, require_tiers, run_family,
                         train_model, train_one_patch)

ACCURACY_GATE = 0.9


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file (defaults used if omitted)")
    p.add_argument("--seed", type=int, help="override the master seed")
    p.add_argument("--out", help="override the output directory")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--dry-run", action="store_true",
                   help="print the job plan without computing")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="patchpose",
        description="Optimize adversarial patches under 3D pose transformations "
                    "and evaluate their success over pose sweeps.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-model", help="train and save the classifier")
    _add_common(p)

    p = sub.add_parser("rank-targets", help="bucket target classes into tiers")
    _add_common(p)

    p = sub.add_parser("train-patch", help="optimize patches for one family")
    _add_common(p)
    p.add_argument("--family", required=True, choices=FAMILIES)
    p.add_argument("--target", type=int, help="single target class (default: tiers)")
    p.add_argument("--support-index", type=int,
                   help="single support index (default: all)")

    p = sub.add_parser("sweep", help="sweep-evaluate existing patches of a family")
    _add_common(p)
    p.add_argument("--family", required=True, choices=("yaw", "roll", "loom"))

    p = sub.add_parser("grid", help="grid-evaluate existing grid-family patches")
    _add_common(p)

    p = sub.add_parser("report", help="full family run: patches, evals, tables, plots")
    _add_common(p)
    p.add_argument("--family", required=True, choices=FAMILIES)

    p = sub.add_parser("plot", help="render CSVs to SVG")
    _add_common(p)
    p.add_argument("--csv", nargs="+", required=True, help="input CSV files")

    return parser


def _load_cfg(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.out is not None:
        cfg = dataclasses.replace(cfg, out_dir=args.out)
    cfg.validate()
    return cfg


def _cmd_train_model(args) -> int:
    cfg = _load_cfg(args)
    if args.dry_run:
        n = cfg.n_classes * (cfg.n_train_per_class + cfg.n_val_per_class)
        print(json.dumps({"would_render_images": n, "epochs": cfg.epochs,
                          "out": cfg.out_dir}, indent=2))
        return 0
    _, metrics = train_model(cfg, cfg.out_dir)
    acc = metrics["val_accuracy"]
    print(f"val accuracy {acc:.4f} (model written to {cfg.out_dir})")
    if acc < ACCURACY_GATE:
        print(f"error: val accuracy {acc:.4f} below the {ACCURACY_GATE} gate",
              file=sys.stderr)
        return 1
    return 0


def _cmd_rank_targets(args) -> int:
    cfg = _load_cfg(args)
    if args.dry_run:
        print(json.dumps({"quick_attacks": cfg.n_classes,
                          "batches_each": cfg.quick_budget_batches}, indent=2))
        return 0
    tiers = rank_targets(cfg, cfg.out_dir)
    print(f"high {list(tiers.high)}  mid {list(tiers.mid)}  low {list(tiers.low)}")
    return 0


def _cmd_train_patch(args) -> int:
    cfg = _load_cfg(args)
    out = Path(cfg.out_dir)
    supports = family_supports(cfg, args.family)
    if args.support_index is not None and not 0 <= args.support_index < len(supports):
        raise ConfigError(f"support index {args.support_index} out of range "
                          f"[0, {len(supports)})")
    if args.target is not None and not 0 <= args.target < cfg.n_classes:
        raise ConfigError(f"target {args.target} out of range [0, {cfg.n_classes})")
    sis = [args.support_index] if args.support_index is not None else list(range(len(supports)))
    targets = [args.target] if args.target is not None else list(require_tiers(out).all_targets())
    if args.dry_run:
        n = len(sis) * len(targets)
        print(json.dumps({"n_optimizations": n,
                          "optimization_images": n * cfg.attack_batches
                          * cfg.attack_batch_size}, indent=2))
        return 0
    net = require_model(out)
    scenes = build_split(cfg, "attack").images
    patch_dir = out / args.family / "patches"
    patch_dir.mkdir(parents=True, exist_ok=True)
    from .attack import save_patch
    for si in sis:
        for t in targets:
            patch = train_one_patch(cfg, args.family, si, t, net, scenes)
            base = patch_dir / f"{supports[si]['tag']}__t{t}"
            save_patch(patch, base)
            print(f"wrote {base}.png (objective {patch.objective_history[-1]:+.4f})"
                  if patch.objective_history else f"wrote {base}.png")
    return 0


def _cmd_family_eval(args, family: str, reuse: bool) -> int:
    cfg = _load_cfg(args)
    summary = run_family(cfg, family, cfg.out_dir, jobs=args.jobs,
                         dry_run=args.dry_run, reuse_patches=reuse)
    if args.dry_run:
        print(json.dumps(summary["plan"], indent=2))
        return 0
    print(f"{family}: {summary['n_patches']} patches, "
          f"{summary['actual_classifier_evals']} classifier evaluations "
          f"(outputs under {cfg.out_dir}/{family})")
    return 0


def _plot_one(csv_path: Path, out_dir: Path) -> Path:
    from .evaluation import (GRID_CSV_HEADER, SWEEP_CSV_HEADER, read_grid_csv,
                             read_sweep_csv)
    from .plots import LineSeries, heatmap_svg, line_plot_svg

    import csv as _csv
    import numpy as np

    with open(csv_path, newline="") as f:
        header = next(_csv.reader(f), None)
    if header == SWEEP_CSV_HEADER:
        rows = read_sweep_csv(csv_path)
        kind = rows[0]["param_kind"]
        series = []
        for target in sorted({r["target_class"] for r in rows}):
            sel = [r for r in rows if r["target_class"] == target]
            xs = np.array([r["phi"] for r in sel])
            ys = np.array([r["success_rate"] for r in sel])
            series.append(LineSeries(label=f"target {target}", xs=xs, ys=ys))
        svg = line_plot_svg(series, title=csv_path.stem, xlabel=kind)
    elif header == GRID_CSV_HEADER:
        rows = read_grid_csv(csv_path)
        yaws = np.array(sorted({r["yaw"] for r in rows}))
        rolls = np.array(sorted({r["roll"] for r in rows}))
        rates = np.zeros((rolls.size, yaws.size))
        yi = {v: i for i, v in enumerate(yaws)}
        ri = {v: i for i, v in enumerate(rolls)}
        for r in rows:
            rates[ri[r["roll"]], yi[r["yaw"]]] = r["success_rate"]
        svg = heatmap_svg(rates, yaws, rolls, title=csv_path.stem,
                          xlabel="yaw (degrees)", ylabel="roll (degrees)")
    else:
        raise ValueError(f"{csv_path}: unrecognized CSV header {header}")
    out_path = out_dir / (csv_path.stem + ".svg")
    out_path.write_text(svg)
    return out_path


def _cmd_plot(args) -> int:
    out_dir = Path(args.out) if args.out else None
    if args.dry_run:
        print(json.dumps({"would_plot": [str(p) for p in args.csv]}, indent=2))
        return 0
    for csv_file in args.csv:
        p = Path(csv_file)
        dest = out_dir if out_dir is not None else p.parent
        dest.mkdir(parents=True, exist_ok=True)
        out_path = _plot_one(p, dest)
        print(f"wrote {out_path}")
    return 0


_DISPATCH = {
    "train-model": _cmd_train_model,
    "rank-targets": _cmd_rank_targets,
    "train-patch": _cmd_train_patch,
    "plot": _cmd_plot,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command in _DISPATCH:
            return _DISPATCH[args.command](args)
        if args.command == "sweep":
            return _cmd_family_eval(args, args.family, reuse=True)
        if args.command == "grid":
            return _cmd_family_eval(args, "grid", reuse=True)
        if args.command == "report":
            return _cmd_family_eval(args, args.family, reuse=False)
        raise RuntimeError(f"unhandled command {args.command!r}")
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except Exception as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
