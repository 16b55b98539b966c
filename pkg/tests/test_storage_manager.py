#!/usr/bin/env python
# -*- coding: utf-8 -*-
import json
from pathlib import Path
from unittest.mock import patch

import numpy as np
import pandas as pd
import pytest
import yaml

from src.core.policy_value_net import NetArch, init_params
from src.core.storage_manager import (CHECKPOINT_FORMAT, RunStorage, config_digest, load_checkpoint, load_settings,
                                      read_csv, save_checkpoint, save_settings, write_csv)
from src.utils.errors import CheckpointMismatch, ConfigValidationError
from src.utils.resource_path import get_resource_path


# --- Test Fixtures ---
@pytest.fixture
def small_params():
    arch = NetArch(input_dim=8, shared_layers=(6, 4), head_hidden=3, action_dim=5)
    return init_params(arch, np.random.default_rng(0), obs_scales=[1e5, 1e4, 1, 1, 0.35, 3.14, 0.8, 1.6])


@pytest.fixture
def storage(tmp_path):
    return RunStorage(tmp_path / "run", digest="abc123", seed=7)


def _write_yaml(path: Path, payload) -> Path:
    path.write_text(yaml.safe_dump(payload))
    return path


# --- Test load_settings ---
def test_load_settings_shipped_file(settings):
    """Test the shipped experiment file resolves to the control variant."""
    assert settings["experiment"]["problem"] == "latitude-max"
    assert settings["hlas"]["channel_mode"] == "control"
    assert settings["trainer"]["steps_per_env"] == 4096


def test_load_settings_explicit_missing(tmp_path):
    """Test an explicitly requested file must exist."""
    with pytest.raises(FileNotFoundError):
        load_settings(tmp_path / "nope.yaml")


@patch("src.core.storage_manager.logging.warning")
@patch("src.core.storage_manager.default_config_path")
def test_load_settings_default_missing(mock_default_path, mock_warning, tmp_path):
    """Test a missing default file leaves the shipped settings in place."""
    mock_default_path.return_value = tmp_path / "missing.yaml"
    settings = load_settings()
    mock_warning.assert_called_once()
    assert settings["simulation"]["dt"] == 2.0
    assert settings["variants"]["baseline"]["trainer"]["c1"] == 100.0


@patch("src.core.storage_manager.default_config_path")
def test_shipped_file_is_the_only_base(mock_default_path, tmp_path):
    """Test every value comes from the shipped file; nothing is filled in from code."""
    mock_default_path.return_value = tmp_path / "missing.yaml"
    shipped = yaml.safe_load(get_resource_path("config/experiment.yaml").read_text())
    shipped["simulation"]["dt"] = 1.0
    base = _write_yaml(tmp_path / "base.yaml", shipped)
    with patch("src.core.storage_manager.BASE_CONFIG_PATH", base):
        assert load_settings()["simulation"]["dt"] == 1.0

    del shipped["evaluation"]
    _write_yaml(base, shipped)
    with patch("src.core.storage_manager.BASE_CONFIG_PATH", base):
        with pytest.raises(ConfigValidationError) as err:
            load_settings()
    assert err.value.field == "evaluation"


def test_missing_shipped_file(tmp_path):
    with patch("src.core.storage_manager.BASE_CONFIG_PATH", tmp_path / "gone.yaml"):
        with pytest.raises(FileNotFoundError):
            load_settings()


def test_partial_file_is_merged_onto_defaults(tmp_path):
    path = _write_yaml(tmp_path / "partial.yaml", {"simulation": {"dt": 1.0}, "experiment": {"seed": 3}})
    settings = load_settings(path)
    assert settings["simulation"]["dt"] == 1.0
    assert settings["simulation"]["max_action_steps"] == 500
    assert settings["experiment"]["seed"] == 3
    assert settings["experiment"]["variant"] == "hlas-control"


def test_honours_env_config(monkeypatch, tmp_path):
    path = _write_yaml(tmp_path / "env.yaml", {"experiment": {"seed": 42}})
    monkeypatch.setenv("HLAS_CONFIG", str(path))
    assert load_settings()["experiment"]["seed"] == 42


@pytest.mark.parametrize("content", ["simulation: [unclosed", "- just\n- a list\n"])
def test_load_settings_rejects_bad_yaml(tmp_path, content):
    path = tmp_path / "bad.yaml"
    path.write_text(content)
    with pytest.raises(ConfigValidationError):
        load_settings(path)


@pytest.mark.parametrize("variant, key, expected", [
    ("hlas-dynamics", "channel_mode", "dynamics"),
    ("hlas-fixed-tau", "tau_min", 4.0),
    ("hlas-fixed-tau", "tau_max", 4.0),
    ("baseline", "p", 0),
    ("baseline", "tau_max", 2.0),
])
def test_variant_rows(variant, key, expected):
    assert load_settings(variant=variant)["hlas"][key] == expected


def test_baseline_trainer_row():
    trainer = load_settings(variant="baseline")["trainer"]
    assert trainer["c1"] == 100.0
    assert trainer["steps_per_env"] == 8192
    assert trainer["minibatch"] == 256
    assert trainer["antiwindup_enabled"] is False


def test_problem_row_applies_after_variant():
    settings = load_settings(problem="windup-bandit")
    assert settings["network"]["shared_layers"] == [16, 16]
    assert settings["trainer"]["c2"] == 0.01
    assert settings["trainer"]["budget_iterations"] == 200


def test_overrides_apply_last():
    settings = load_settings(problem="windup-bandit", overrides={"trainer": {"budget_iterations": 0}})
    assert settings["trainer"]["budget_iterations"] == 0


@pytest.mark.parametrize("kwargs, field", [
    ({"problem": "moon-landing"}, "experiment.problem"),
    ({"variant": "hlas-magic"}, "experiment.variant"),
    ({"overrides": {"simulation": {"obs_scales": [1.0] * 7}}}, "simulation.obs_scales"),
    ({"overrides": {"simulation": {"max_action_steps": 0}}}, "simulation.max_action_steps"),
    ({"overrides": {"network": {"activation": "tanh"}}}, "network.activation"),
    ({"overrides": {"evaluation": {"ic_scale": -1.0}}}, "evaluation.ic_scale"),
])
def test_validation_names_field(kwargs, field):
    with pytest.raises(ConfigValidationError) as err:
        load_settings(**kwargs)
    assert err.value.field == field


# --- Test config_digest and save_settings ---
def test_digest_is_stable_and_sensitive(settings):
    assert config_digest(settings) == config_digest(load_settings())
    settings["trainer"]["lr"] = 1e-4
    assert config_digest(settings) != config_digest(load_settings())


def test_resolved_config_reloads_to_same_digest(settings, tmp_path):
    path = tmp_path / "resolved_config.yaml"
    save_settings(settings, path)
    assert config_digest(load_settings(path)) == config_digest(settings)


# --- Test checkpoints ---
def test_checkpoint_preserves_every_bit(small_params, tmp_path):
    path = save_checkpoint(tmp_path / "ckpt.json", small_params, digest="d1", seed=5, metadata={"iteration": 3})
    params, document = load_checkpoint(path, small_params.arch, small_params.obs_scales)
    for name, block in small_params.blocks().items():
        np.testing.assert_array_equal(params.blocks()[name], block)
    np.testing.assert_array_equal(params.obs_scales, small_params.obs_scales)
    assert document["format"] == CHECKPOINT_FORMAT
    assert document["config_digest"] == "d1"
    assert document["seed"] == 5
    assert document["metadata"]["iteration"] == 3
    assert not path.with_suffix(".json.tmp").exists()


def test_checkpoint_architecture_mismatch(small_params, tmp_path):
    path = save_checkpoint(tmp_path / "ckpt.json", small_params, digest="d1", seed=0)
    with pytest.raises(CheckpointMismatch):
        load_checkpoint(path, NetArch(input_dim=8, shared_layers=(256, 256), head_hidden=128, action_dim=5))


def test_checkpoint_obs_scale_mismatch(small_params, tmp_path):
    path = save_checkpoint(tmp_path / "ckpt.json", small_params, digest="d1", seed=0)
    with pytest.raises(CheckpointMismatch):
        load_checkpoint(path, small_params.arch, np.ones(8))


def test_checkpoint_missing_block(small_params, tmp_path):
    path = save_checkpoint(tmp_path / "ckpt.json", small_params, digest="d1", seed=0)
    document = json.loads(path.read_text())
    del document["weights"]["vf_out.W"]
    path.write_text(json.dumps(document))
    with pytest.raises(CheckpointMismatch):
        load_checkpoint(path)


@pytest.mark.parametrize("text", ["not json", json.dumps({"format": "something-else", "version": 1})])
def test_checkpoint_rejects_foreign_files(tmp_path, text):
    path = tmp_path / "foreign.json"
    path.write_text(text)
    with pytest.raises(CheckpointMismatch):
        load_checkpoint(path)


def test_checkpoint_not_found(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_checkpoint(tmp_path / "missing.json")


# --- Test CSV artifacts ---
def test_csv_header_comments(tmp_path):
    frame = pd.DataFrame({"t": [0.0, 2.0], "h": [79248.0, 79100.5]})
    path = write_csv(tmp_path / "out.csv", frame, digest="feed", seed=9)
    lines = path.read_text().splitlines()
    assert lines[0] == "# config_digest=feed"
    assert lines[1] == "# seed=9"
    assert lines[2] == "t,h"
    loaded, meta = read_csv(path)
    assert meta == {"config_digest": "feed", "seed": "9"}
    pd.testing.assert_frame_equal(loaded, frame)


# --- Test RunStorage ---
def test_run_storage_layout(storage):
    assert storage.run_dir.is_dir()
    assert storage.checkpoint_dir.is_dir()
    assert storage.checkpoint_dir.parent == storage.run_dir


def test_training_log(storage):
    storage.start_training_log()
    frame, meta = read_csv(storage.training_log_path)
    assert list(frame.columns) == RunStorage.TRAINING_LOG_COLUMNS
    assert frame.empty
    assert meta["seed"] == "7"

    storage.append_training_row({"iteration": 1, "env_steps": 32, "avg_return_100": 0.5, "d": 0.0, "c3": 1.0,
                                 "extra": "ignored"})
    frame, _ = read_csv(storage.training_log_path)
    assert len(frame) == 1
    assert frame.loc[0, "env_steps"] == 32
    assert "extra" not in frame.columns


def test_training_log_resume_keeps_rows(storage):
    storage.start_training_log()
    storage.append_training_row({"iteration": 1})
    storage.start_training_log(resume=True)
    frame, _ = read_csv(storage.training_log_path)
    assert len(frame) == 1
    storage.start_training_log(resume=False)
    frame, _ = read_csv(storage.training_log_path)
    assert frame.empty


def test_save_best_writes_numbered_copy(storage, small_params):
    best = storage.save_best(small_params, {"iteration": 4, "best_avg_return": 1.5})
    numbered = storage.checkpoint_dir / "iter_000004.json"
    assert numbered.exists()
    assert best.read_bytes() == numbered.read_bytes()


def test_write_json_converts_numpy(storage):
    path = storage.write_json("summary.json", {"mean": np.float64(0.25), "rows": np.arange(3)})
    document = json.loads(path.read_text())
    assert document == {"config_digest": "abc123", "seed": 7, "mean": 0.25, "rows": [0, 1, 2]}


def test_save_settings_next_to_artifacts(storage, settings):
    path = storage.save_settings(settings)
    assert path.name == "resolved_config.yaml"
    assert yaml.safe_load(path.read_text())["experiment"]["problem"] == "latitude-max"
