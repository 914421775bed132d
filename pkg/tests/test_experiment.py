"""Experiment driver logic: support descriptors, plans, seeds, tables.

Everything here is cheap bookkeeping; the expensive stages are covered
by the acceptance suite.
"""

import csv

import pytest

from patchpose.config import desk_preset
from patchpose.data import TargetTiers
from patchpose.experiment import (_eval_seed, _num_tag, _patch_seed, build_split,
                                  family_supports, grid_spec_for, plan_family,
                                  require_model, require_tiers, sweep_spec_for,
                                  write_mast_table)


def test_num_tag():
    assert _num_tag(20) == "20"
    assert _num_tag(2.5) == "2p5"
    assert _num_tag(-45) == "m45"


def test_yaw_supports():
    cfg = desk_preset()
    sup = family_supports(cfg, "yaw")
    assert [s["label"] for s in sup] == ["±0°", "±20°", "±40°", "±60°"]
    assert [s["tag"] for s in sup] == ["pm0", "pm20", "pm40", "pm60"]
    for s, width in zip(sup, (0, 20, 40, 60)):
        assert s["dist"].yaw_max == width
        assert s["dist"].roll_max == 0.0
        assert s["dist"].z_lo == s["dist"].z_hi == cfg.reference_depth
        assert s["shade"] == (-width, width)


def test_loom_supports():
    cfg = desk_preset()
    sup = family_supports(cfg, "loom")
    assert sup[0]["label"] == "[7,7]"
    assert sup[-1]["tag"] == "z4_10"
    assert sup[-1]["dist"].z_lo == 4 and sup[-1]["dist"].z_hi == 10
    assert sup[-1]["dist"].yaw_max == 0.0


def test_grid_supports():
    cfg = desk_preset()
    sup = family_supports(cfg, "grid")
    assert sup[0]["label"] == "±0°×±0°"
    assert sup[1]["label"] == "±60°×±180°"
    assert sup[1]["tag"] == "y60_r180"
    assert sup[1]["dist"].yaw_max == 60 and sup[1]["dist"].roll_max == 180
    assert sup[1]["shade"] is None


def test_family_supports_rejects_unknown():
    with pytest.raises(ValueError, match="family"):
        family_supports(desk_preset(), "pitch")


def test_sweep_spec_mapping():
    cfg = desk_preset(seed=7)
    spec = sweep_spec_for(cfg, "roll", seed=123)
    assert spec.kind == "roll"
    assert (spec.alpha, spec.beta) == cfg.roll_sweep
    assert spec.n_intervals == cfg.sweep_intervals
    assert spec.images_per_point == cfg.images_per_point
    assert spec.seed == 123

    loom = sweep_spec_for(cfg, "loom", seed=0)
    assert (loom.alpha, loom.beta) == cfg.loom_sweep


def test_grid_spec_mapping():
    cfg = desk_preset()
    spec = grid_spec_for(cfg, seed=5)
    assert (spec.yaw_alpha, spec.yaw_beta) == cfg.grid_yaw_range
    assert (spec.roll_alpha, spec.roll_beta) == cfg.grid_roll_range
    assert spec.n_yaw == spec.n_roll == cfg.grid_intervals
    assert spec.images_per_point == cfg.grid_images_per_point


def test_plan_family_arithmetic():
    cfg = desk_preset()
    plan = plan_family(cfg, "yaw", n_targets=9)
    assert plan["n_optimizations"] == 4 * 9
    assert plan["optimization_images"] == 36 * cfg.attack_batches * cfg.attack_batch_size
    assert plan["eval_points_per_patch"] == cfg.sweep_intervals + 1
    assert plan["n_classifier_evals"] == (36 * (cfg.sweep_intervals + 1)
                                          * cfg.images_per_point)

    grid = plan_family(cfg, "grid", n_targets=3)
    assert grid["n_optimizations"] == 2 * 3
    assert grid["eval_points_per_patch"] == (cfg.grid_intervals + 1) ** 2
    assert grid["images_per_point"] == cfg.grid_images_per_point


def test_job_seeds_are_distinct():
    cfg = desk_preset()
    seeds = set()
    for family in ("yaw", "roll", "loom", "grid"):
        for si in range(4):
            for t in range(12):
                seeds.add(_patch_seed(cfg, family, si, t))
                seeds.add(_eval_seed(cfg, family, si, t))
    assert len(seeds) == 4 * 4 * 12 * 2


def test_build_split_sizes():
    cfg = desk_preset()
    assert len(build_split(cfg, "train")) == 12 * cfg.n_train_per_class
    assert len(build_split(cfg, "val")) == 12 * cfg.n_val_per_class
    assert len(build_split(cfg, "attack")) == 12 * cfg.n_attack_per_class


def test_require_helpers_name_the_fix(tmp_path):
    with pytest.raises(FileNotFoundError, match="train-model"):
        require_model(tmp_path)
    with pytest.raises(FileNotFoundError, match="rank-targets"):
        require_tiers(tmp_path)


def test_mast_table_layout(tmp_path):
    tiers = TargetTiers(high=(1, 2), mid=(5,), low=(),
                        scores={i: float(i) for i in range(12)})
    labels = ["±0°", "±20°"]
    rows = [
        {"target_class": 1, "tier": "high", "train_support": "±0°", "mast": 0.2},
        {"target_class": 2, "tier": "high", "train_support": "±0°", "mast": 0.4},
        {"target_class": 5, "tier": "mid", "train_support": "±0°", "mast": 0.6},
        {"target_class": 1, "tier": "high", "train_support": "±20°", "mast": 0.8},
        {"target_class": 2, "tier": "high", "train_support": "±20°", "mast": 1.0},
        # target 5 has no ±20° entry: that cell must come out empty
    ]
    path = tmp_path / "table.csv"
    write_mast_table(rows, labels, tiers, path)
    with open(path, newline="") as f:
        got = list(csv.reader(f))
    assert got[0] == ["tier", "±0°", "±20°"]
    assert [r[0] for r in got[1:]] == ["high", "mid"]  # empty low tier skipped
    assert float(got[1][1]) == pytest.approx(0.3)
    assert float(got[1][2]) == pytest.approx(0.9)
    assert float(got[2][1]) == pytest.approx(0.6)
    assert got[2][2] == ""
