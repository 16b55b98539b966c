#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""Command-line entry point: train, eval, plan and gradcheck.

Usage:
    python -m src.cli.planner_cli train --variant hlas-control --budget-iterations 10
    python -m src.cli.planner_cli eval --checkpoint runs/.../checkpoints/best.json --n-episodes 100
    python -m src.cli.planner_cli plan --checkpoint runs/.../checkpoints/best.json
    python -m src.cli.planner_cli gradcheck --seed 0

Exit codes: 0 success, 1 invalid config or checkpoint, 2 numerical failure,
3 failed self-check.
"""
import argparse
import json
import logging
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional

import pandas as pd
from dotenv import load_dotenv

from src.core.environment import terminal_miss_distance
from src.core.experiment import Experiment, build_experiment
from src.core.planner import evaluate_policy, plan_trajectory, trace_to_frame
from src.core.ppo_trainer import TrainerState, resolve_n_threads, train
from src.core.storage_manager import RunStorage, load_checkpoint, load_settings
from src.core.vehicle_dynamics import VehicleState
from src.utils.errors import CheckpointMismatch, ConfigValidationError, DomainError, NumericalFailure, OracleFailure
from src.utils import gradcheck
from src.utils.resource_path import default_config_path

load_dotenv()

# Configure logging
logging.basicConfig(level=logging.INFO, format="%(asctime)s - %(levelname)s - CLI - %(message)s")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERIC = 2
EXIT_ORACLE = 3


# --- Run configuration ---
INITIAL_STATE_KEYS = ("h", "v", "theta_deg", "phi_deg", "gamma_deg", "psi_deg", "alpha_deg", "sigma_deg")


def parse_initial_state(text: Optional[str]) -> Optional[VehicleState]:
    """Parses --initial-state: a JSON object keyed like INITIAL_STATE_KEYS, a JSON list
    or a comma list of eight values in that order. Lengths in m, speed in m/s, angles in deg.
    """
    if text is None:
        return None
    text = text.strip()
    try:
        values = json.loads(text) if text[:1] in ("{", "[") else [float(x) for x in text.split(",")]
    except ValueError as e:
        raise ConfigValidationError("--initial-state", f"cannot parse {text!r}: {e}") from e
    if isinstance(values, dict):
        unknown = sorted(set(values) - set(INITIAL_STATE_KEYS))
        if unknown or not {"h", "v"} <= set(values):
            raise ConfigValidationError("--initial-state",
                                        f"needs h and v, allows {INITIAL_STATE_KEYS}, got {sorted(values)}")
        kwargs = values
    elif isinstance(values, list) and len(values) == len(INITIAL_STATE_KEYS):
        kwargs = dict(zip(INITIAL_STATE_KEYS, values))
    else:
        raise ConfigValidationError("--initial-state", f"expected {len(INITIAL_STATE_KEYS)} values {INITIAL_STATE_KEYS}")
    if not all(isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v) for v in kwargs.values()):
        raise ConfigValidationError("--initial-state", f"every value must be a finite number, got {kwargs}")
    if kwargs["h"] <= 0 or kwargs["v"] <= 0:
        raise ConfigValidationError("--initial-state", "h and v must be positive")
    return VehicleState.from_degrees(**kwargs)


@dataclass
class RunConfig:
    command: str
    config_path: Path
    explicit_config: bool
    seed: Optional[int]
    out: Optional[Path]
    problem: Optional[str]
    variant: Optional[str]
    checkpoint: Optional[Path] = None
    n_episodes: Optional[int] = None
    ic_scale: Optional[float] = None
    budget_steps: Optional[int] = None
    budget_iterations: Optional[int] = None
    budget_seconds: Optional[float] = None
    workers: Optional[int] = None
    inject_fault: Optional[str] = None
    initial_state: Optional[VehicleState] = None

    def __post_init__(self):
        if self.n_episodes is not None and self.n_episodes < 1:
            raise ConfigValidationError("--n-episodes", f"must be >= 1, got {self.n_episodes}")
        if self.ic_scale is not None and not (math.isfinite(self.ic_scale) and self.ic_scale >= 0):
            raise ConfigValidationError("--ic-scale", f"must be >= 0, got {self.ic_scale}")
        if self.workers is not None and self.workers < 1:
            raise ConfigValidationError("--workers", f"must be >= 1, got {self.workers}")

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "RunConfig":
        explicit = args.config is not None
        return cls(
            command=args.command,
            config_path=Path(args.config) if explicit else default_config_path(),
            explicit_config=explicit,
            seed=args.seed,
            out=Path(args.out) if getattr(args, "out", None) else None,
            problem=getattr(args, "problem", None),
            variant=getattr(args, "variant", None),
            checkpoint=Path(args.checkpoint) if getattr(args, "checkpoint", None) else None,
            n_episodes=getattr(args, "n_episodes", None),
            ic_scale=getattr(args, "ic_scale", None),
            budget_steps=getattr(args, "budget_steps", None),
            budget_iterations=getattr(args, "budget_iterations", None),
            budget_seconds=getattr(args, "budget_seconds", None),
            workers=getattr(args, "workers", None),
            inject_fault=getattr(args, "inject_fault", None),
            initial_state=parse_initial_state(getattr(args, "initial_state", None)),
        )

    def overrides(self) -> Dict[str, Any]:
        """Flag values that replace config entries before validation."""
        trainer: Dict[str, Any] = {}
        for key in ("budget_steps", "budget_iterations", "budget_seconds"):
            value = getattr(self, key)
            if value is not None:
                trainer[key] = value
        evaluation: Dict[str, Any] = {}
        if self.n_episodes is not None:
            evaluation["n_episodes"] = self.n_episodes
        if self.ic_scale is not None:
            evaluation["ic_scale"] = self.ic_scale
        experiment: Dict[str, Any] = {}
        if self.seed is not None:
            experiment["seed"] = self.seed
        return {k: v for k, v in (("trainer", trainer), ("evaluation", evaluation), ("experiment", experiment)) if v}


def _progress_enabled() -> bool:
    return os.getenv("HLAS_PROGRESS", "1").strip().lower() not in ("0", "false", "no", "off")


def _apply_log_level() -> None:
    level_name = os.getenv("HLAS_LOG_LEVEL")
    if not level_name:
        return
    level = logging.getLevelName(level_name.strip().upper())
    if isinstance(level, int):
        logging.getLogger().setLevel(level)
    else:
        logging.warning(f"Invalid HLAS_LOG_LEVEL '{level_name}'. Keeping INFO.")


def _prepare(cfg: RunConfig) -> Experiment:
    settings = load_settings(cfg.config_path if cfg.explicit_config else None, cfg.problem, cfg.variant, cfg.overrides())
    return build_experiment(settings, cfg.config_path)


def _storage(cfg: RunConfig, experiment: Experiment) -> RunStorage:
    out = cfg.out
    if out is None:
        base = Path(experiment.settings["experiment"]["output_dir"])
        out = base / f"{cfg.command}-{experiment.problem}-{experiment.variant}-seed{experiment.seed}"
    return RunStorage(out, experiment.digest, experiment.seed)


def _load_policy(cfg: RunConfig, experiment: Experiment):
    if cfg.checkpoint is None:
        raise ConfigValidationError("--checkpoint", "a checkpoint is required for this command")
    return load_checkpoint(cfg.checkpoint, expected_arch=experiment.arch, expected_obs_scales=experiment.obs_scales)


def _finite_or_none(value: float) -> Optional[float]:
    return value if math.isfinite(value) else None


def _checkpoint_metadata(state: TrainerState, experiment: Experiment) -> Dict[str, Any]:
    return {
        "best_avg_return": _finite_or_none(state.best_avg_return),
        "iteration": state.iteration,
        "env_steps": state.env_steps,
        "c3": state.c3,
        "problem": experiment.problem,
        "variant": experiment.variant,
    }


# --- Commands ---
def run_train(cfg: RunConfig) -> int:
    """Trains until a budget is spent, writing the training log and checkpoints."""
    experiment = _prepare(cfg)
    storage = _storage(cfg, experiment)
    storage.save_settings(experiment.settings)
    trainer_section = experiment.settings["trainer"]

    resume: Dict[str, Any] = {}
    if cfg.checkpoint is not None:
        params, document = _load_policy(cfg, experiment)
        meta = document.get("metadata", {})
        resume = {
            "c3": meta.get("c3"),
            "iteration": int(meta.get("iteration", 0)),
            "env_steps": int(meta.get("env_steps", 0)),
            "best_avg_return": meta.get("best_avg_return") if meta.get("best_avg_return") is not None else -math.inf,
        }
        logging.info(f"Resuming from {cfg.checkpoint} at iteration {resume['iteration']}")
    else:
        params = experiment.init_params()

    n_threads = cfg.workers if cfg.workers is not None else resolve_n_threads(experiment.trainer_cfg.n_envs)
    state = TrainerState.create(params, experiment.trainer_cfg, experiment.make_envs(), experiment.seed,
                                n_threads=n_threads, **resume)
    storage.start_training_log(resume=cfg.checkpoint is not None)
    if cfg.checkpoint is None:
        storage.save_checkpoint(state.params, "initial", _checkpoint_metadata(state, experiment))

    def on_new_best(s: TrainerState, metrics: Dict[str, Any]) -> None:
        storage.save_best(s.params, _checkpoint_metadata(s, experiment))

    try:
        state = train(state, budget_iterations=trainer_section.get("budget_iterations"),
                      budget_steps=trainer_section.get("budget_steps"),
                      budget_seconds=trainer_section.get("budget_seconds"),
                      on_iteration=storage.append_training_row, on_new_best=on_new_best,
                      progress=_progress_enabled())
    except NumericalFailure:
        storage.save_checkpoint(state.params, "last_good", _checkpoint_metadata(state, experiment))
        raise
    storage.save_checkpoint(state.params, "latest", _checkpoint_metadata(state, experiment))
    logging.info(f"Run artifacts in {storage.run_dir}")
    return EXIT_OK


def run_eval(cfg: RunConfig) -> int:
    """Evaluates the action-mean policy over randomized initial conditions."""
    experiment = _prepare(cfg)
    if not experiment.is_reentry:
        raise ConfigValidationError("experiment.problem", "eval needs a reentry problem")
    params, document = _load_policy(cfg, experiment)
    storage = _storage(cfg, experiment)
    evaluation = experiment.settings["evaluation"]
    ic_scale = float(evaluation["ic_scale"])
    workers = cfg.workers or 1

    report = evaluate_policy(lambda: experiment.make_env(ic_scale=ic_scale), params,
                             n_episodes=int(evaluation["n_episodes"]), seed=experiment.seed,
                             workers=workers, progress=_progress_enabled())
    nominal_env = experiment.make_env(ic_scale=0.0)
    nominal = plan_trajectory(nominal_env, params, seed=experiment.seed)

    storage.write_csv("eval_episodes.csv", report.episodes)
    summary = {
        **report.summary,
        "ic_scale": ic_scale,
        "checkpoint": str(cfg.checkpoint),
        "checkpoint_digest": document.get("config_digest"),
        "nominal": {
            "final_latitude_deg": math.degrees(nominal.final_state.phi),
            "return": nominal.episode_return,
            "termination_cause": nominal.termination_cause,
            "n_action_steps": nominal.n_action_steps,
            "terminal_psi": terminal_miss_distance(nominal.final_state, nominal_env.problem),
        },
        "reference": evaluation.get("reference", {}),
    }
    storage.write_json("eval_summary.json", summary)
    print(f"average return {summary['average_return']:.4f}, terminal misses "
          f"{summary['terminal_misses']}/{summary['n_episodes']}, "
          f"nominal final latitude {summary['nominal']['final_latitude_deg']:.2f} deg, "
          f"nominal terminal Psi {summary['nominal']['terminal_psi']:.4g}")
    return EXIT_OK


def run_plan(cfg: RunConfig) -> int:
    """Plans one trajectory with the action mean and writes trajectory.csv and actions.csv."""
    experiment = _prepare(cfg)
    if not experiment.is_reentry:
        raise ConfigValidationError("experiment.problem", "plan needs a reentry problem")
    params, _ = _load_policy(cfg, experiment)
    storage = _storage(cfg, experiment)
    ic_scale = cfg.ic_scale if cfg.ic_scale is not None else 0.0
    env = experiment.make_env(record_trace=True, ic_scale=ic_scale)
    result = plan_trajectory(env, params, seed=experiment.seed, initial_state=cfg.initial_state)

    storage.write_csv("trajectory.csv", trace_to_frame(result.trace))
    storage.write_csv("actions.csv", pd.DataFrame(result.actions))
    print(f"{result.termination_cause} after {result.n_action_steps} action steps "
          f"({result.elapsed_time:.0f} s), final latitude {math.degrees(result.final_state.phi):.2f} deg, "
          f"return {result.episode_return:.4f}")
    return EXIT_OK


def run_gradcheck(cfg: RunConfig) -> int:
    """Finite-difference checks of every gradient path; fails with exit code 3."""
    seed = cfg.seed if cfg.seed is not None else 0
    report = gradcheck.run_gradcheck(seed=seed, inject_fault=cfg.inject_fault)
    print(report.format())
    if cfg.out is not None:
        storage = RunStorage(cfg.out, digest="gradcheck", seed=seed)
        storage.write_json("gradcheck.json", {"passed": report.passed, "max_error": report.max_error,
                                              "results": [r.__dict__ for r in report.results]})
    gradcheck.assert_passed(report)
    return EXIT_OK


COMMANDS = {
    "train": run_train,
    "eval": run_eval,
    "plan": run_plan,
    "gradcheck": run_gradcheck,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="Experiment YAML (default: HLAS_CONFIG or config/experiment.yaml)")
    common.add_argument("--seed", type=int, default=None, help="Overrides experiment.seed")
    common.add_argument("--out", default=None, help="Output directory for run artifacts")

    selectors = argparse.ArgumentParser(add_help=False)
    selectors.add_argument("--problem", default=None, help="latitude-max, debris-avoidance, windup-bandit, duration-choice")
    selectors.add_argument("--variant", default=None,
                           help="hlas-control, hlas-dynamics, hlas-dynamics-no-antiwindup, hlas-fixed-tau, baseline")

    parser = argparse.ArgumentParser(prog="planner_cli", description="Variable-duration action-space trajectory planner")
    sub = parser.add_subparsers(dest="command", required=True)

    train_p = sub.add_parser("train", parents=[common, selectors], help="Train a policy")
    train_p.add_argument("--checkpoint", default=None, help="Resume from this checkpoint")
    train_p.add_argument("--budget-steps", type=int, default=None, help="Stop after this many environment steps")
    train_p.add_argument("--budget-iterations", type=int, default=None, help="Stop after this many iterations")
    train_p.add_argument("--budget-seconds", type=float, default=None, help="Stop after this much wall-clock time")
    train_p.add_argument("--workers", type=int, default=None, help="Rollout threads (default: HLAS_N_WORKERS or n_envs)")

    eval_p = sub.add_parser("eval", parents=[common, selectors], help="Evaluate a checkpoint")
    eval_p.add_argument("--checkpoint", required=True, help="Policy checkpoint")
    eval_p.add_argument("--n-episodes", type=int, default=None, help="Overrides evaluation.n_episodes")
    eval_p.add_argument("--ic-scale", type=float, default=None, help="Overrides evaluation.ic_scale")
    eval_p.add_argument("--workers", type=int, default=None, help="Episode-level threads")

    plan_p = sub.add_parser("plan", parents=[common, selectors], help="Plan one trajectory with a checkpoint")
    plan_p.add_argument("--checkpoint", required=True, help="Policy checkpoint")
    plan_p.add_argument("--ic-scale", type=float, default=None, help="Initial-condition perturbation scale (default 0)")
    plan_p.add_argument("--initial-state", default=None, metavar="STATE",
                        help="Fixed initial state: JSON object or list, or comma list of "
                             "h,v,theta,phi,gamma,psi,alpha,sigma (m, m/s, deg); replaces the sampled one")

    grad_p = sub.add_parser("gradcheck", parents=[common], help="Finite-difference gradient self-checks")
    grad_p.add_argument("--inject-fault", default=None, metavar="BLOCK",
                        help="Corrupt one analytic gradient block (test mode)")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    _apply_log_level()
    try:
        cfg = RunConfig.from_args(args)
        return COMMANDS[cfg.command](cfg)
    except (ConfigValidationError, CheckpointMismatch, FileNotFoundError) as e:
        logging.error(f"{type(e).__name__}: {e}")
        return EXIT_CONFIG
    except (NumericalFailure, DomainError) as e:
        logging.error(f"{type(e).__name__}: {e}", exc_info=True)
        return EXIT_NUMERIC
    except OracleFailure as e:
        logging.error(f"Self-check failed: {e}")
        return EXIT_ORACLE


if __name__ == "__main__":
    sys.exit(main())
