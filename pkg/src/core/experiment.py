#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""Wires resolved settings into environments, network architecture and trainer config."""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import gymnasium as gym
import numpy as np

from src.core.environment import ObstacleMap, ProblemSpec, ReentryEnv, obstacle_map_from_settings
from src.core.hlas import HlasConfig
from src.core.policy_value_net import NetArch, PolicyParams, init_params
from src.core.ppo_trainer import TrainerConfig
from src.core.storage_manager import REENTRY_PROBLEMS, config_digest
from src.core.toy_environments import DurationChoiceEnv, WindupBanditEnv
from src.core.vehicle_dynamics import VehicleParams, load_vehicle_params
from src.utils.errors import ConfigValidationError
from src.utils.resource_path import default_config_path, get_resource_path, resolve_config_relative

# Configure logging
logging.basicConfig(level=logging.INFO, format="%(asctime)s - %(levelname)s - Experiment - %(message)s")


@dataclass
class Experiment:
    settings: dict
    problem: str
    variant: str
    seed: int
    digest: str
    trainer_cfg: TrainerConfig
    arch: NetArch
    obs_scales: np.ndarray
    problem_spec: Optional[ProblemSpec] = None
    vehicle: Optional[VehicleParams] = None
    hlas_cfg: Optional[HlasConfig] = None
    obstacle_map: Optional[ObstacleMap] = None

    @property
    def is_reentry(self) -> bool:
        return self.problem in REENTRY_PROBLEMS

    def make_env(self, record_trace: bool = False, ic_scale: Optional[float] = None) -> gym.Env:
        if self.is_reentry:
            spec = self.problem_spec if ic_scale is None else self.problem_spec.with_ic_scale(ic_scale)
            return ReentryEnv(spec, self.vehicle, self.hlas_cfg, self.obstacle_map, record_trace=record_trace)
        return _toy_env(self.settings, self.problem)

    def make_envs(self, n: Optional[int] = None) -> List[gym.Env]:
        return [self.make_env() for _ in range(self.trainer_cfg.n_envs if n is None else n)]

    def init_params(self, seed: Optional[int] = None) -> PolicyParams:
        rng = np.random.default_rng(self.seed if seed is None else seed)
        return init_params(self.arch, rng, self.obs_scales)


def _toy_value(section: dict, problem: str, key: str) -> float:
    value = section.get(key)
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ConfigValidationError(f"problems.{problem}.{key}", f"must be a number, got {value!r}")
    return float(value)


def _toy_env(settings: dict, problem: str) -> gym.Env:
    section = settings["problems"][problem]
    if problem == "windup-bandit":
        return WindupBanditEnv(threshold=_toy_value(section, problem, "threshold"))
    return DurationChoiceEnv(horizon=_toy_value(section, problem, "horizon"),
                             long_tau=_toy_value(section, problem, "long_tau"),
                             short_tau=_toy_value(section, problem, "short_tau"))


def _vehicle_path(settings: dict, config_path: Path) -> Path:
    candidate = resolve_config_relative(str(settings["vehicle_file"]), config_path)
    if candidate.exists():
        return candidate
    return get_resource_path("config") / str(settings["vehicle_file"])


def build_experiment(settings: dict, config_path: Optional[Path] = None, seed: Optional[int] = None) -> Experiment:
    """Builds every typed config for the selected problem and variant.

    Args:
        settings: Resolved settings from `load_settings`.
        config_path: The experiment file the settings came from; relative paths
            inside it (the vehicle file) resolve against its directory.
        seed: Overrides `experiment.seed`.
    """
    problem = settings["experiment"]["problem"]
    variant = settings["experiment"]["variant"]
    run_seed = int(settings["experiment"]["seed"] if seed is None else seed)
    trainer_cfg = TrainerConfig.from_settings(settings["trainer"])
    digest = config_digest(settings)

    if problem in REENTRY_PROBLEMS:
        config_path = Path(config_path) if config_path is not None else default_config_path()
        vehicle = load_vehicle_params(_vehicle_path(settings, config_path))
        hlas_cfg = HlasConfig.from_settings(settings["hlas"])
        if hlas_cfg.n_channels != 2:
            raise ConfigValidationError("hlas.z_bounds_deg", "reentry problems use exactly two channels")
        spec = ProblemSpec.from_settings(settings)
        obstacle_map = obstacle_map_from_settings(settings, spec)
        arch = NetArch.from_settings(settings["network"], input_dim=8, action_dim=hlas_cfg.action_dim)
        logging.info(f"Experiment {problem}/{variant}: action_dim={arch.action_dim}, "
                     f"channel_mode={hlas_cfg.channel_mode}, tau=[{hlas_cfg.tau_min}, {hlas_cfg.tau_max}]")
        return Experiment(settings=settings, problem=problem, variant=variant, seed=run_seed, digest=digest,
                          trainer_cfg=trainer_cfg, arch=arch, obs_scales=np.asarray(spec.obs_scales, dtype=np.float64),
                          problem_spec=spec, vehicle=vehicle, hlas_cfg=hlas_cfg, obstacle_map=obstacle_map)

    sample_env = _toy_env(settings, problem)
    input_dim = int(sample_env.observation_space.shape[0])
    arch = NetArch.from_settings(settings["network"], input_dim=input_dim,
                                 action_dim=int(sample_env.action_space.shape[0]))
    logging.info(f"Experiment {problem}: toy environment with obs_dim={input_dim}, action_dim={arch.action_dim}")
    return Experiment(settings=settings, problem=problem, variant=variant, seed=run_seed, digest=digest,
                      trainer_cfg=trainer_cfg, arch=arch, obs_scales=np.ones(input_dim))
