"""Self-supervised BEV motion fields from optimal-transport pseudo labels."""

import json

from . import _bevmotion
from ._bevmotion import (
    ConfigError,
    Error,
    bfs_cluster,
    cost_matrix,
    load_field,
    pseudo_labels,
    render,
    sinkhorn,
    smooth_l1,
)

__all__ = [
    "ConfigError",
    "Error",
    "bfs_cluster",
    "cost_matrix",
    "default_config",
    "evaluate",
    "generate",
    "gradcheck",
    "load_field",
    "optimize_scene",
    "pseudo_labels",
    "scene_labels",
    "render",
    "sinkhorn",
    "smooth_l1",
    "suite",
    "write_archive",
]


def _cfg(config):
    return "" if config is None else json.dumps(config)


def default_config():
    return json.loads(_bevmotion.default_config())


def suite(name, seed=0):
    """Recipes of a fixture suite ("smoke", "ablation", "divergence") as dicts."""
    return json.loads(_bevmotion.suite_recipes(name, seed))


def generate(recipe, config=None):
    return _bevmotion.generate(json.dumps(recipe), _cfg(config))


def write_archive(recipe, directory, config=None):
    _bevmotion.write_archive(json.dumps(recipe), directory, _cfg(config))


def scene_labels(scene_dir, direction="forward", config=None):
    return _bevmotion.pseudo_labels_for_scene(scene_dir, direction, _cfg(config))


def optimize_scene(scene_dir, losses="sup,c,f,b", config=None):
    out = _bevmotion.optimize_scene(scene_dir, losses, _cfg(config))
    out["state"] = json.loads(out["state"])
    return out


def evaluate(pred_path, scene_dir, config=None):
    return json.loads(_bevmotion.evaluate(pred_path, scene_dir, _cfg(config)))


def gradcheck(config=None, tolerance=1e-5, points=100):
    return _bevmotion.gradcheck(_cfg(config), tolerance, points)
