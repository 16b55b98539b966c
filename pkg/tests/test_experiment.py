#!/usr/bin/env python
# -*- coding: utf-8 -*-
import numpy as np
import pytest
import yaml

from src.core.environment import ReentryEnv
from src.core.experiment import build_experiment
from src.core.storage_manager import load_settings
from src.core.toy_environments import DurationChoiceEnv, WindupBanditEnv
from src.utils.errors import ConfigValidationError
from src.utils.resource_path import get_resource_path


def test_latitude_experiment(settings):
    experiment = build_experiment(settings)
    assert experiment.is_reentry
    assert experiment.arch.action_dim == 5
    assert experiment.arch.param_count() == 134667
    assert experiment.obstacle_map is None
    assert experiment.vehicle.q_max == 80.0
    assert len(experiment.obs_scales) == 8
    env = experiment.make_env()
    assert isinstance(env, ReentryEnv)
    assert env.problem.ic_scale == 1.0
    assert experiment.make_env(ic_scale=0.5).problem.ic_scale == 0.5


def test_debris_experiment_has_obstacles():
    experiment = build_experiment(load_settings(problem="debris-avoidance"))
    assert len(experiment.obstacle_map) == 14
    assert experiment.make_env().obstacle_map is experiment.obstacle_map


def test_baseline_action_space():
    experiment = build_experiment(load_settings(variant="baseline"))
    assert experiment.arch.action_dim == 3
    assert experiment.hlas_cfg.tau_min == experiment.hlas_cfg.tau_max == 2.0


def test_dynamics_variant_channels():
    experiment = build_experiment(load_settings(variant="hlas-dynamics"))
    assert experiment.hlas_cfg.channel_mode == "dynamics"
    assert experiment.hlas_cfg.z_max[0] == pytest.approx(np.radians(0.5))


@pytest.mark.parametrize("problem, env_type, obs_dim", [
    ("windup-bandit", WindupBanditEnv, 1),
    ("duration-choice", DurationChoiceEnv, 2),
])
def test_toy_experiments(problem, env_type, obs_dim):
    experiment = build_experiment(load_settings(problem=problem))
    assert not experiment.is_reentry
    assert experiment.arch.input_dim == obs_dim
    assert experiment.arch.action_dim == 1
    assert experiment.arch.shared_layers == (16, 16)
    envs = experiment.make_envs()
    assert len(envs) == experiment.trainer_cfg.n_envs
    assert all(isinstance(env, env_type) for env in envs)


def test_seed_override_and_seeded_init(settings):
    experiment = build_experiment(settings, seed=12)
    assert experiment.seed == 12
    a, b = experiment.init_params(), experiment.init_params()
    np.testing.assert_array_equal(a.weights["trunk_0.W"], b.weights["trunk_0.W"])
    np.testing.assert_array_equal(a.obs_scales, experiment.obs_scales)


def test_vehicle_file_resolves_next_to_config(tmp_path):
    vehicle = yaml.safe_load(get_resource_path("config/vehicle_shuttle.yaml").read_text())
    vehicle["m"] = 90000.0
    (tmp_path / "light.yaml").write_text(yaml.safe_dump(vehicle))
    config = tmp_path / "experiment.yaml"
    config.write_text(yaml.safe_dump({"vehicle_file": "light.yaml"}))
    experiment = build_experiment(load_settings(config), config_path=config)
    assert experiment.vehicle.m == 90000.0


def test_reentry_needs_two_channels():
    overrides = {"hlas": {"z_bounds_deg": [[-45.0, 45.0], [-89.0, 89.0], [-1.0, 1.0]]}}
    with pytest.raises(ConfigValidationError):
        build_experiment(load_settings(overrides=overrides))


@pytest.mark.parametrize("problem, overrides, field", [
    ("latitude-max", {"problems": {"latitude-max": {"c0": None}}}, "problems.latitude-max.c0"),
    ("debris-avoidance", {"problems": {"debris-avoidance": {"obstacles": {"count": None}}}},
     "problems.debris-avoidance.obstacles.count"),
    ("windup-bandit", {"problems": {"windup-bandit": {"threshold": None}}}, "problems.windup-bandit.threshold"),
    ("duration-choice", {"problems": {"duration-choice": {"long_tau": None}}}, "problems.duration-choice.long_tau"),
    ("latitude-max", {"hlas": {"continuity": None}}, "hlas.continuity"),
])
def test_missing_values_are_not_filled_in(problem, overrides, field):
    with pytest.raises(ConfigValidationError) as err:
        build_experiment(load_settings(problem=problem, overrides=overrides))
    assert err.value.field == field
