"""Shared fixtures: the desk-scale trained classifier and its tiers.

The model is trained once per session through the command line entry
point (exercising the real artifact path) and loaded back for in-process
use. Tests that only need gradients or shapes use a randomly initialized
net instead, which is effectively free.
"""

import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from patchpose.config import desk_preset, save_config
from patchpose.data import N_CLASSES, make_dataset
from patchpose.model import TinyConvNet, load_model


def run_cli(*args, check=True):
    """Invoke the installed CLI in a subprocess; returns CompletedProcess."""
    proc = subprocess.run([sys.executable, "-m", "patchpose", *map(str, args)],
                          capture_output=True, text=True)
    if check and proc.returncode != 0:
        raise AssertionError(
            f"cli {' '.join(map(str, args))} failed ({proc.returncode}):\n{proc.stderr}")
    return proc


@pytest.fixture(scope="session")
def desk_cfg():
    return desk_preset()


@pytest.fixture(scope="session")
def desk_cfg_path(desk_cfg, tmp_path_factory) -> Path:
    path = tmp_path_factory.mktemp("cfg") / "desk.json"
    save_config(desk_cfg, path)
    return path


@pytest.fixture(scope="session")
def model_dir(desk_cfg_path, tmp_path_factory) -> Path:
    """Output directory of one desk-scale train-model CLI run (seed 0)."""
    out = tmp_path_factory.mktemp("run_a")
    run_cli("train-model", "--config", desk_cfg_path, "--out", out)
    return out


@pytest.fixture(scope="session")
def desk_net(model_dir) -> TinyConvNet:
    return load_model(model_dir / "model.ppnet")


@pytest.fixture(scope="session")
def desk_tiers(model_dir, desk_cfg_path):
    from patchpose.data import load_tiers

    run_cli("rank-targets", "--config", desk_cfg_path, "--out", model_dir)
    return load_tiers(model_dir / "tiers.json")


@pytest.fixture(scope="session")
def attack_scenes(desk_cfg) -> np.ndarray:
    ds = make_dataset(desk_cfg.n_attack_per_class, desk_cfg.seed, split="attack")
    return ds.images


@pytest.fixture(scope="session")
def family_runs(desk_cfg, model_dir, desk_tiers):
    """Full roll/yaw/loom family runs restricted to the high tier.

    One patch per (support, high-tier target) with the real driver, so
    the trend assertions read the same artifacts the report command
    writes. This is the expensive fixture (around 15 minutes).
    """
    from patchpose.data import TargetTiers
    from patchpose.experiment import run_family

    high_only = TargetTiers(high=desk_tiers.high, mid=(), low=(),
                            scores=desk_tiers.scores)
    return {
        family: run_family(desk_cfg, family, model_dir, tiers=high_only)
        for family in ("roll", "yaw", "loom")
    }


@pytest.fixture(scope="session")
def rand_net() -> TinyConvNet:
    """Untrained net with reproducible random weights (gradient tests)."""
    net = TinyConvNet(N_CLASSES)
    net.init_params(np.random.default_rng([99, 1]))
    return net


def constant_net(target: int, n_classes: int = N_CLASSES) -> TinyConvNet:
    """A net that predicts ``target`` for every input (zero convs, biased fc)."""
    net = TinyConvNet(n_classes)
    net.params["bf"][target] = 5.0
    return net
