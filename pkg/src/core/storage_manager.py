#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""Experiment settings, checkpoints and CSV artifacts.

Settings are read from the YAML experiment file and deep-merged onto the
shipped config/experiment.yaml, so a partial file still yields a complete config.
Run artifacts (checkpoints, logs, traces) live in a run directory managed by
`RunStorage`.
"""
import copy
import hashlib
import json
import logging
import math
import os
import shutil
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import yaml
from dotenv import load_dotenv

from src.core.policy_value_net import NetArch, PolicyParams
from src.utils.errors import CheckpointMismatch, ConfigValidationError
from src.utils.resource_path import default_config_path, get_resource_path

load_dotenv()

# Configure logging
logging.basicConfig(level=logging.INFO, format="%(asctime)s - %(levelname)s - Storage - %(message)s")

CHECKPOINT_FORMAT = "hlas-policy-checkpoint"
CHECKPOINT_VERSION = 1

REENTRY_PROBLEMS = ("latitude-max", "debris-avoidance")
TOY_PROBLEMS = ("windup-bandit", "duration-choice")
VARIANTS = ("hlas-control", "hlas-dynamics", "hlas-dynamics-no-antiwindup", "hlas-fixed-tau", "baseline")

# --- Defaults ---
# The shipped experiment file is the base layer every other file merges onto;
# hyperparameters live there and nowhere else.
BASE_CONFIG_PATH = get_resource_path("config/experiment.yaml")
REQUIRED_SECTIONS = ("experiment", "vehicle_file", "simulation", "problems", "hlas", "network", "trainer",
                     "variants", "evaluation")


# --- Configuration Loading ---
def merge_dicts(base: dict, update: dict) -> dict:
    """Recursively merges `update` into `base` (in place) and returns `base`."""
    for key, value in update.items():
        if isinstance(value, dict) and key in base and isinstance(base[key], dict):
            merge_dicts(base[key], value)
        else:
            base[key] = value
    return base


def read_yaml(path: Path) -> dict:
    """Reads a YAML mapping. Parse errors are reported as config validation errors."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            loaded = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ConfigValidationError(str(path), f"invalid YAML: {e}") from e
    if loaded is None:
        return {}
    if not isinstance(loaded, dict):
        raise ConfigValidationError(str(path), "top level must be a mapping")
    return loaded


def load_settings(path: Optional[Path] = None, problem: Optional[str] = None, variant: Optional[str] = None,
                  overrides: Optional[dict] = None) -> dict:
    """Loads the experiment settings and resolves problem and variant overrides.

    Args:
        path: YAML experiment file merged onto the shipped config/experiment.yaml.
            Defaults to HLAS_CONFIG; a missing default file leaves the shipped
            settings as they are.
        problem: Overrides `experiment.problem`.
        variant: Overrides `experiment.variant`.
        overrides: Extra nested mapping merged last (used by tests and CLI flags).

    Returns:
        The resolved settings: `hlas` and `trainer` already carry the variant rows,
        and toy problems' `network`/`trainer` sections are applied on top.

    Raises:
        FileNotFoundError: An explicitly requested file, or the shipped base file,
            does not exist.
        ConfigValidationError: A value failed validation or a required section is missing.
    """
    explicit = path is not None
    settings_path = Path(path) if explicit else default_config_path()
    if not BASE_CONFIG_PATH.exists():
        raise FileNotFoundError(f"Shipped experiment config not found: {BASE_CONFIG_PATH}")
    settings = read_yaml(BASE_CONFIG_PATH)

    if settings_path.exists():
        if settings_path.resolve() != BASE_CONFIG_PATH.resolve():
            merge_dicts(settings, read_yaml(settings_path))
        logging.info(f"Loaded experiment settings from {settings_path}")
    elif explicit:
        raise FileNotFoundError(f"Experiment config not found: {settings_path}")
    else:
        logging.warning(f"Settings file not found at {settings_path}. Using the shipped settings.")

    for section in REQUIRED_SECTIONS:
        if section not in settings:
            raise ConfigValidationError(section, "missing required section")

    if problem:
        settings["experiment"]["problem"] = problem
    if variant:
        settings["experiment"]["variant"] = variant
    _apply_selectors(settings)
    if overrides:
        merge_dicts(settings, copy.deepcopy(overrides))
    validate_settings(settings)
    return settings


def _apply_selectors(settings: dict) -> None:
    problem = settings["experiment"]["problem"]
    variant = settings["experiment"]["variant"]
    if problem not in settings["problems"]:
        raise ConfigValidationError("experiment.problem", f"unknown problem '{problem}' (known: {sorted(settings['problems'])})")
    if variant not in settings["variants"]:
        raise ConfigValidationError("experiment.variant", f"unknown variant '{variant}' (known: {sorted(settings['variants'])})")

    variant_row = settings["variants"][variant]
    for section in ("hlas", "trainer", "network"):
        if section in variant_row:
            merge_dicts(settings[section], copy.deepcopy(variant_row[section]))

    problem_row = settings["problems"][problem]
    for section in ("trainer", "network"):
        if section in problem_row:
            merge_dicts(settings[section], copy.deepcopy(problem_row[section]))


def _require_positive(value: Any, field: str) -> None:
    if not isinstance(value, (int, float)) or isinstance(value, bool) or not math.isfinite(value) or value <= 0:
        raise ConfigValidationError(field, f"must be a positive finite number, got {value!r}")


def validate_settings(settings: dict) -> None:
    """Structural checks on resolved settings. Typed configs validate their own value ranges."""
    sim = settings["simulation"]
    _require_positive(sim.get("dt"), "simulation.dt")
    steps = sim.get("max_action_steps")
    if not isinstance(steps, int) or isinstance(steps, bool) or steps < 1:
        raise ConfigValidationError("simulation.max_action_steps", f"must be an integer >= 1, got {steps!r}")
    scales = sim.get("obs_scales")
    if not isinstance(scales, list) or len(scales) != 8:
        raise ConfigValidationError("simulation.obs_scales", "must list 8 per-component scales")
    for i, s in enumerate(scales):
        _require_positive(s, f"simulation.obs_scales[{i}]")

    layers = settings["network"].get("shared_layers")
    if not isinstance(layers, list) or not layers:
        raise ConfigValidationError("network.shared_layers", "must be a non-empty list of widths")
    for i, width in enumerate(layers):
        if not isinstance(width, int) or width < 1:
            raise ConfigValidationError(f"network.shared_layers[{i}]", f"width must be an integer >= 1, got {width!r}")
    head = settings["network"].get("head_hidden")
    if not isinstance(head, int) or head < 1:
        raise ConfigValidationError("network.head_hidden", f"width must be an integer >= 1, got {head!r}")
    if settings["network"].get("activation") != "relu":
        raise ConfigValidationError("network.activation", "only 'relu' is supported")

    for key in ("budget_iterations", "budget_steps"):
        value = settings["trainer"].get(key)
        if value is not None and (not isinstance(value, int) or value < 0):
            raise ConfigValidationError(f"trainer.{key}", f"must be a non-negative integer or null, got {value!r}")
    seconds = settings["trainer"].get("budget_seconds")
    if seconds is not None:
        _require_positive(seconds, "trainer.budget_seconds")

    evaluation = settings["evaluation"]
    n_episodes = evaluation.get("n_episodes")
    if not isinstance(n_episodes, int) or n_episodes < 1:
        raise ConfigValidationError("evaluation.n_episodes", f"must be an integer >= 1, got {n_episodes!r}")
    ic_scale = evaluation.get("ic_scale")
    if not isinstance(ic_scale, (int, float)) or not math.isfinite(ic_scale) or ic_scale < 0:
        raise ConfigValidationError("evaluation.ic_scale", f"must be >= 0, got {ic_scale!r}")


def config_digest(settings: dict) -> str:
    """SHA-256 of the canonical JSON dump of the resolved settings."""
    canonical = json.dumps(settings, sort_keys=True, separators=(",", ":"), ensure_ascii=True, default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def save_settings(settings: dict, path: Path) -> None:
    """Writes resolved settings as YAML (e.g. resolved_config.yaml next to run artifacts)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(settings, f, sort_keys=True, default_flow_style=False, allow_unicode=True)
    logging.info(f"Saved resolved settings to {path}")


# --- Checkpoints ---
def save_checkpoint(path: Path, params: PolicyParams, digest: str, seed: int, metadata: Optional[dict] = None) -> Path:
    """Writes a self-describing JSON checkpoint. Floats use shortest round-trip repr."""
    arch = params.arch
    document = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "arch": {
            "input_dim": arch.input_dim,
            "shared_layers": list(arch.shared_layers),
            "head_hidden": arch.head_hidden,
            "action_dim": arch.action_dim,
        },
        "activation": arch.activation,
        "weights": {
            name: {"shape": list(value.shape), "data": value.ravel(order="C").tolist()}
            for name, value in params.weights.items()
        },
        "log_std": params.log_std.tolist(),
        "obs_scales": params.obs_scales.tolist(),
        "config_digest": digest,
        "seed": int(seed),
        "metadata": dict(metadata or {}),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp_path = path.with_suffix(path.suffix + ".tmp")
    with open(tmp_path, "w", encoding="utf-8") as f:
        json.dump(document, f, indent=4, ensure_ascii=False, allow_nan=False)
    os.replace(tmp_path, path)
    logging.info(f"Checkpoint written to {path}")
    return path


def load_checkpoint(path: Path, expected_arch: Optional[NetArch] = None,
                    expected_obs_scales: Optional[Sequence[float]] = None) -> Tuple[PolicyParams, dict]:
    """Loads a checkpoint written by `save_checkpoint`.

    Returns:
        (params, document) where document holds digest, seed and metadata.

    Raises:
        FileNotFoundError: The checkpoint does not exist.
        CheckpointMismatch: Format, architecture or observation scales disagree.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Checkpoint not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            document = json.load(f)
    except json.JSONDecodeError as e:
        raise CheckpointMismatch(f"{path} is not a valid checkpoint: {e}") from e

    if document.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointMismatch(f"{path}: unexpected format {document.get('format')!r}")
    if document.get("version") != CHECKPOINT_VERSION:
        raise CheckpointMismatch(f"{path}: unsupported version {document.get('version')!r}")

    raw_arch = document["arch"]
    arch = NetArch(
        input_dim=int(raw_arch["input_dim"]),
        shared_layers=tuple(int(w) for w in raw_arch["shared_layers"]),
        head_hidden=int(raw_arch["head_hidden"]),
        action_dim=int(raw_arch["action_dim"]),
        activation=document.get("activation", "relu"),
    )
    if expected_arch is not None and arch != expected_arch:
        raise CheckpointMismatch(f"{path}: architecture {arch} does not match configured {expected_arch}")

    obs_scales = np.asarray(document["obs_scales"], dtype=np.float64)
    if expected_obs_scales is not None:
        expected = np.asarray(expected_obs_scales, dtype=np.float64)
        if expected.shape != obs_scales.shape or not np.array_equal(expected, obs_scales):
            raise CheckpointMismatch(f"{path}: observation scales {obs_scales.tolist()} do not match configured {expected.tolist()}")

    weights = {}
    for name, shape in arch.weight_shapes().items():
        entry = document["weights"].get(name)
        if entry is None or tuple(entry["shape"]) != shape:
            raise CheckpointMismatch(f"{path}: weight block '{name}' missing or mis-shaped")
        weights[name] = np.asarray(entry["data"], dtype=np.float64).reshape(shape)
    log_std = np.asarray(document["log_std"], dtype=np.float64)
    if log_std.shape != (arch.action_dim,):
        raise CheckpointMismatch(f"{path}: log_std has shape {log_std.shape}, expected ({arch.action_dim},)")

    params = PolicyParams(arch=arch, weights=weights, log_std=log_std, obs_scales=obs_scales)
    logging.info(f"Loaded checkpoint {path} (digest {document.get('config_digest', '')[:12]}, seed {document.get('seed')})")
    return params, document


# --- CSV artifacts ---
def _comment_header(digest: str, seed: int) -> str:
    return f"# config_digest={digest}\n# seed={int(seed)}\n"


def write_csv(path: Path, frame: pd.DataFrame, digest: str, seed: int) -> Path:
    """Writes a CSV preceded by `# config_digest=` / `# seed=` comment lines."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(_comment_header(digest, seed))
        frame.to_csv(f, index=False)
    return path


def read_csv(path: Path) -> Tuple[pd.DataFrame, Dict[str, str]]:
    """Reads a CSV written by `write_csv`; returns (frame, header metadata)."""
    meta: Dict[str, str] = {}
    skip = 0
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if not line.startswith("#"):
                break
            key, _, value = line[1:].strip().partition("=")
            meta[key.strip()] = value.strip()
            skip += 1
    frame = pd.read_csv(path, skiprows=skip)
    return frame, meta


# --- Run Storage Manager ---
class RunStorage:
    """Manages the artifacts of one run directory: checkpoints, training log, traces and reports."""

    TRAINING_LOG_COLUMNS = ["iteration", "env_steps", "avg_return_100", "clip_fraction",
                            "value_loss", "entropy", "d", "c3", "wall_clock"]

    def __init__(self, out_dir: Path, digest: str, seed: int):
        self.run_dir = Path(out_dir).expanduser().resolve()
        self.digest = digest
        self.seed = int(seed)
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self.checkpoint_dir = self.run_dir / "checkpoints"
        self.checkpoint_dir.mkdir(parents=True, exist_ok=True)
        self.training_log_path = self.run_dir / "training_log.csv"
        logging.info(f"RunStorage initialized at {self.run_dir}")

    def save_settings(self, settings: dict) -> Path:
        path = self.run_dir / "resolved_config.yaml"
        save_settings(settings, path)
        return path

    def save_checkpoint(self, params: PolicyParams, name: str, metadata: Optional[dict] = None) -> Path:
        return save_checkpoint(self.checkpoint_dir / f"{name}.json", params, self.digest, self.seed, metadata)

    def save_best(self, params: PolicyParams, metadata: Optional[dict] = None) -> Path:
        """Writes a numbered checkpoint for the new best average and refreshes best.json."""
        iteration = int((metadata or {}).get("iteration", 0))
        numbered = self.save_checkpoint(params, f"iter_{iteration:06d}", metadata)
        best = self.checkpoint_dir / "best.json"
        shutil.copyfile(numbered, best)
        logging.info(f"New best average return {metadata.get('best_avg_return') if metadata else None}; refreshed {best}")
        return best

    def start_training_log(self, resume: bool = False) -> None:
        """Creates the training log with its header. On resume an existing log is kept."""
        if resume and self.training_log_path.exists():
            return
        write_csv(self.training_log_path, pd.DataFrame(columns=self.TRAINING_LOG_COLUMNS), self.digest, self.seed)

    def append_training_row(self, row: Dict[str, Any]) -> None:
        if not self.training_log_path.exists():
            self.start_training_log()
        frame = pd.DataFrame([{key: row.get(key) for key in self.TRAINING_LOG_COLUMNS}])
        frame.to_csv(self.training_log_path, mode="a", header=False, index=False)

    def write_csv(self, name: str, frame: pd.DataFrame) -> Path:
        return write_csv(self.run_dir / name, frame, self.digest, self.seed)

    def write_json(self, name: str, payload: Dict[str, Any]) -> Path:
        document = {"config_digest": self.digest, "seed": self.seed, **payload}
        path = self.run_dir / name
        with open(path, "w", encoding="utf-8") as f:
            json.dump(document, f, indent=4, ensure_ascii=False, default=_json_default)
        logging.info(f"Wrote {path}")
        return path


def _json_default(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")
