"""Tool configuration: a YAML grid specification with strict validation.

The file has four sections: top-level ``seed`` and ``mode``, a ``grid``
mapping of per-field value lists (expanded as a cross product), optional
``profiles`` overrides and optional ``cost`` coefficients.  Unknown keys are
rejected with the offending line number so config errors pinpoint
themselves.  See docs/config-example.yaml for the exhaustive form.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Any, Optional

import yaml

from .experiment import ExperimentConfig
from .workload import CostModel

__all__ = ["ToolConfig", "ConfigError", "load_config", "CONFIG_EXAMPLE"]


class ConfigError(ValueError):
    """Invalid configuration; message carries file and line context."""


_GRID_FIELDS = {
    "machine_profile": str,
    "n_part_px": int,
    "n_nodes_px": int,
    "n_part_br": int,
    "n_nodes_br": int,
    "wc_centroids": int,
    "ms_points": int,
    "mem_mb": int,
}

_PROFILE_FIELDS = {
    # container memory is a grid variable (mem_mb), not a profile override
    "serverless": {
        "hard_cap": int,
        "cold_start_s": float,
        "per_partition_limit": float,
        "walltime_s": float,
        "arrival_jitter": float,
        "service_jitter": float,
    },
    "hpc": {
        "cores_per_node": int,
        "shared_fs_bandwidth": float,
        "per_partition_limit": float,
        "coherence_delay_s": float,
        "arrival_jitter": float,
        "service_jitter": float,
    },
}

_COST_FIELDS = {"t_unit": float, "t_io_per_byte": float}

CONFIG_EXAMPLE = """\
# streamscale run configuration (exhaustive example)
seed: 7
mode: analytic            # analytic | measured

grid:                     # lists expand as a cross product
  machine_profile: [serverless, hpc]
  n_part_px: [1, 2, 4, 8, 16]
  n_nodes_px: [1]         # optional; default [1]
  # n_part_br / n_nodes_br default to their _px counterparts
  wc_centroids: [128, 1024, 8192]
  ms_points: [8000, 16000]
  mem_mb: [3008]

profiles:                 # optional parameter overrides
  serverless:
    per_partition_limit: 1000000.0
    cold_start_s: 0.4
    walltime_s: 900.0
    arrival_jitter: 0.0
    service_jitter: 0.0
  hpc:
    shared_fs_bandwidth: 2000000.0
    cores_per_node: 12
    coherence_delay_s: 0.002
    per_partition_limit: 8000000.0

cost:                     # optional workload cost coefficients
  t_unit: 1.0e-8
  t_io_per_byte: 1.0e-8
"""


@dataclass
class ToolConfig:
    seed: int = 0
    mode: str = "analytic"
    grid: dict[str, list] = field(default_factory=dict)
    profile_overrides: dict[str, dict] = field(default_factory=dict)
    cost: CostModel = field(default_factory=CostModel)

    def expand(self) -> list[ExperimentConfig]:
        """Cross product of the grid lists as experiment configurations."""
        g = self.grid
        if "machine_profile" not in g or "n_part_px" not in g:
            raise ConfigError("grid requires machine_profile and n_part_px lists")
        names = [
            "machine_profile", "n_part_px", "n_nodes_px", "n_part_br",
            "n_nodes_br", "wc_centroids", "ms_points", "mem_mb",
        ]
        defaults = {
            "n_nodes_px": [1], "n_part_br": [None], "n_nodes_br": [None],
            "wc_centroids": [1024], "ms_points": [8000], "mem_mb": [3008],
        }
        lists = [g.get(name, defaults.get(name)) for name in names]
        out = []
        for combo in itertools.product(*lists):
            kw = dict(zip(names, combo))
            out.append(ExperimentConfig(seed=self.seed, mode=self.mode, **kw))
        return out


def _scalar(node: yaml.Node) -> Any:
    return yaml.safe_load(node.value) if node.value != "" else None


def _err(path: str, node: yaml.Node, msg: str) -> ConfigError:
    line = node.start_mark.line + 1
    return ConfigError(f"{path}:{line}: {msg}")


def _expect_mapping(path: str, node: yaml.Node, what: str) -> None:
    if not isinstance(node, yaml.MappingNode):
        raise _err(path, node, f"{what} must be a mapping")


def _check_scalar(path: str, key: str, node: yaml.Node, typ) -> Any:
    if not isinstance(node, yaml.ScalarNode):
        raise _err(path, node, f"key {key!r} expects a scalar {typ.__name__}")
    value = _scalar(node)
    if typ is float and isinstance(value, int):
        value = float(value)
    if not isinstance(value, typ):
        raise _err(path, node, f"key {key!r} expects {typ.__name__}, got {value!r}")
    return value


def _check_list(path: str, key: str, node: yaml.Node, typ) -> list:
    if not isinstance(node, yaml.SequenceNode):
        raise _err(path, node, f"key {key!r} expects a list")
    return [_check_scalar(path, key, item, typ) for item in node.value]


def load_config(path: str) -> ToolConfig:
    """Parse and validate a configuration file (raises ConfigError)."""
    with open(path) as fh:
        text = fh.read()
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    if root is None:
        raise ConfigError(f"{path}: empty configuration")
    _expect_mapping(path, root, "configuration")

    cfg = ToolConfig()
    for key_node, val_node in root.value:
        key = key_node.value
        if key == "seed":
            cfg.seed = _check_scalar(path, key, val_node, int)
        elif key == "mode":
            mode = _check_scalar(path, key, val_node, str)
            if mode not in ("analytic", "measured"):
                raise _err(path, val_node, f"mode must be analytic|measured, got {mode!r}")
            cfg.mode = mode
        elif key == "grid":
            _expect_mapping(path, val_node, "grid")
            for gk_node, gv_node in val_node.value:
                gk = gk_node.value
                if gk not in _GRID_FIELDS:
                    raise _err(path, gk_node, f"unknown key {gk!r} in section 'grid'")
                values = _check_list(path, gk, gv_node, _GRID_FIELDS[gk])
                if gk == "machine_profile":
                    for v, item in zip(values, gv_node.value):
                        if v not in ("serverless", "hpc"):
                            raise _err(path, item, f"unknown machine profile {v!r}")
                cfg.grid[gk] = values
        elif key == "profiles":
            _expect_mapping(path, val_node, "profiles")
            for pk_node, pv_node in val_node.value:
                pk = pk_node.value
                if pk not in _PROFILE_FIELDS:
                    raise _err(path, pk_node, f"unknown key {pk!r} in section 'profiles'")
                _expect_mapping(path, pv_node, f"profiles.{pk}")
                section = {}
                for fk_node, fv_node in pv_node.value:
                    fk = fk_node.value
                    if fk not in _PROFILE_FIELDS[pk]:
                        raise _err(
                            path, fk_node,
                            f"unknown key {fk!r} in section 'profiles.{pk}'",
                        )
                    section[fk] = _check_scalar(path, fk, fv_node, _PROFILE_FIELDS[pk][fk])
                cfg.profile_overrides[pk] = section
        elif key == "cost":
            _expect_mapping(path, val_node, "cost")
            kw = {}
            for ck_node, cv_node in val_node.value:
                ck = ck_node.value
                if ck not in _COST_FIELDS:
                    raise _err(path, ck_node, f"unknown key {ck!r} in section 'cost'")
                kw[ck] = _check_scalar(path, ck, cv_node, _COST_FIELDS[ck])
            cfg.cost = CostModel(**kw)
        else:
            raise _err(path, key_node, f"unknown key {key!r}")
    return cfg
