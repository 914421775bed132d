"""patchpose: pose-swept adversarial patch optimization and evaluation.

Optimizes a planar patch texture so a small built-in CNN misclassifies
scenes containing it, in expectation over 3D pose (yaw, roll, camera
distance, insertion location), then measures how attack success holds
up across pose sweeps and compound pose grids.
"""

from .attack import (AttackConfig, Patch, TransformDistribution, eot_step,
                     load_patch, optimize_patch, sample_transform, save_patch)
from .config import ConfigError, ExperimentConfig, desk_preset, full_preset
from .data import Dataset, TargetTiers, make_dataset, rank_target_classes, render_scene
from .evaluation import (GridResult, GridSpec, MastReport, SweepResult, SweepSpec,
                         mast, run_grid, run_sweep, success_rate)
from .geometry import (CameraIntrinsics, PatchPlacement, Pose,
                       homography_from_correspondences, intrinsics_from_fov,
                       project, project_patch)
from .model import TinyConvNet, load_model, save_model, train_classifier
from .render import apply_patch, backprop_to_texture, insert_patch, warp_patch

__version__ = "0.1.0"

__all__ = [
    "AttackConfig", "CameraIntrinsics", "ConfigError", "Dataset", "ExperimentConfig",
    "GridResult", "GridSpec", "MastReport", "Patch", "PatchPlacement", "Pose",
    "SweepResult", "SweepSpec", "TargetTiers", "TinyConvNet", "TransformDistribution",
    "apply_patch", "backprop_to_texture", "desk_preset", "eot_step", "full_preset",
    "homography_from_correspondences", "insert_patch", "intrinsics_from_fov",
    "load_model", "load_patch", "make_dataset", "mast", "optimize_patch", "project",
    "project_patch", "rank_target_classes", "render_scene", "run_grid", "run_sweep",
    "sample_transform", "save_model", "save_patch", "success_rate",
    "train_classifier", "warp_patch",
]
