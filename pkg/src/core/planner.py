#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""Deterministic-policy planning and evaluation on the reentry environment.

Planning loop: observe, take the action mean, decode it into a duration and a
profile, fly the sub-horizon, and repeat until the goal, an obstacle, a
constraint violation or the action-step cap ends the episode.
"""
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd
from tqdm import tqdm

from src.core.environment import ReentryEnv, TraceSample, terminal_check, terminal_miss_distance
from src.core.policy_value_net import PolicyParams, deterministic_action
from src.core.vehicle_dynamics import STATE_FIELDS, VehicleState

# Configure logging
logging.basicConfig(level=logging.INFO, format="%(asctime)s - %(levelname)s - Planner - %(message)s")

TRAJECTORY_COLUMNS = ["t", *STATE_FIELDS, "alpha_cmd", "sigma_cmd", "q", "reward", "action_step_index",
                      "termination_cause", "f1", "f2", "f3", "L_cmd", "saturated"]


@dataclass
class PlanResult:
    trace: List[TraceSample]
    actions: List[Dict[str, Any]]
    termination_cause: str
    episode_return: float
    final_state: VehicleState
    elapsed_time: float = 0.0
    policy_eval_seconds: List[float] = field(default_factory=list)

    @property
    def n_action_steps(self) -> int:
        return len(self.actions)


@dataclass
class EvalReport:
    episodes: pd.DataFrame
    summary: Dict[str, Any]


def plan_trajectory(env: ReentryEnv, params: PolicyParams, seed: Optional[int] = None,
                    initial_state: Optional[VehicleState] = None) -> PlanResult:
    """Flies one episode with the action mean. `env` should record its trace."""
    options = {"state": initial_state} if initial_state is not None else None
    obs, _ = env.reset(seed=seed, options=options)
    actions: List[Dict[str, Any]] = []
    eval_seconds: List[float] = []
    cause = "none"
    t_start = 0.0
    while True:
        started = time.perf_counter()
        raw = deterministic_action(obs, params)
        elapsed = time.perf_counter() - started
        obs, _, terminated, _, info = env.step(raw)
        eval_seconds.append(elapsed)
        row = {"action_step_index": len(actions), "t_start": t_start, "tau": info["tau"],
               "tau_eff": info["tau_eff"], "n_sub": info["n_sub"]}
        row.update({f"raw_{j}": float(v) for j, v in enumerate(raw)})
        nodes = info["decoded_action"].nodes
        for c in range(nodes.shape[0]):
            row.update({f"node_{c}_{k}": float(nodes[c, k]) for k in range(nodes.shape[1])})
        row["policy_eval_seconds"] = elapsed
        actions.append(row)
        t_start = info["elapsed_time"]
        if terminated:
            cause = info["termination_cause"]
            break
    logging.debug(f"Planned {len(actions)} action steps, cause={cause}, return={env.episode_return:.4f}")
    return PlanResult(trace=list(env.trace), actions=actions, termination_cause=cause,
                      episode_return=env.episode_return, final_state=env.state, elapsed_time=t_start,
                      policy_eval_seconds=eval_seconds)


def trace_to_frame(trace: List[TraceSample]) -> pd.DataFrame:
    """One row per dt step; the initial row carries no commands."""
    rows = []
    for sample in trace:
        row = {"t": sample.t}
        row.update(dict(zip(STATE_FIELDS, sample.state.as_array())))
        row["alpha_cmd"] = sample.control.alpha_cmd if sample.control is not None else math.nan
        row["sigma_cmd"] = sample.control.sigma_cmd if sample.control is not None else math.nan
        row["q"] = sample.q
        row["reward"] = sample.reward
        row["action_step_index"] = sample.action_step_index
        row["termination_cause"] = sample.termination_cause
        force = sample.force
        for key in ("f1", "f2", "f3", "L_cmd"):
            row[key] = getattr(force, key) if force is not None else math.nan
        row["saturated"] = bool(sample.saturated)
        rows.append(row)
    return pd.DataFrame(rows, columns=TRAJECTORY_COLUMNS)


def _run_episode(make_env, params: PolicyParams, index: int, seed: int) -> Dict[str, Any]:
    env: ReentryEnv = make_env()
    result = plan_trajectory(env, params, seed=seed)
    spec = env.problem
    final = result.final_state
    return {
        "episode": index,
        "seed": seed,
        "final_latitude_deg": math.degrees(final.phi),
        "final_longitude_deg": math.degrees(final.theta),
        "final_h": final.h,
        "final_v": final.v,
        "final_gamma_deg": math.degrees(final.gamma),
        "terminal_psi": terminal_miss_distance(final, spec),
        "return": result.episode_return,
        "termination_cause": result.termination_cause,
        "terminal_miss": not terminal_check(final, spec),
        "n_action_steps": result.n_action_steps,
        "elapsed_time": result.elapsed_time,
        "policy_eval_seconds": float(np.mean(result.policy_eval_seconds)),
    }


def summarize(episodes: pd.DataFrame) -> Dict[str, Any]:
    """Aggregates recomputable from the per-episode rows."""
    return {
        "n_episodes": int(len(episodes)),
        "average_return": float(episodes["return"].mean()),
        "average_final_latitude_deg": float(episodes["final_latitude_deg"].mean()),
        "terminal_misses": int(episodes["terminal_miss"].sum()),
        "causes": {str(k): int(v) for k, v in episodes["termination_cause"].value_counts().sort_index().items()},
        "mean_policy_eval_seconds": float(episodes["policy_eval_seconds"].mean()),
    }


def evaluate_policy(make_env, params: PolicyParams, n_episodes: int, seed: int, workers: int = 1,
                    progress: bool = True) -> EvalReport:
    """Deterministic-policy episodes from independently seeded initial conditions.

    Args:
        make_env: Zero-argument factory returning a fresh ReentryEnv (with the
            evaluation ic_scale already applied).
        params: Policy parameters.
        n_episodes: Number of episodes.
        seed: Root seed; episode i resets with the i-th derived seed.
        workers: Episode-level threads.
        progress: Show a progress bar.
    """
    seeds = [int(s) for s in np.random.SeedSequence(int(seed)).generate_state(n_episodes)]
    bar = tqdm(total=n_episodes, desc="Evaluating", unit="ep", disable=not progress)
    try:
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                futures = [pool.submit(_run_episode, make_env, params, i, s) for i, s in enumerate(seeds)]
                rows = []
                for future in futures:
                    rows.append(future.result())
                    bar.update(1)
        else:
            rows = []
            for i, s in enumerate(seeds):
                rows.append(_run_episode(make_env, params, i, s))
                bar.update(1)
    finally:
        bar.close()
    episodes = pd.DataFrame(rows)
    summary = summarize(episodes)
    logging.info(f"Evaluated {n_episodes} episodes: average return {summary['average_return']:.4f}, "
                 f"{summary['terminal_misses']} terminal misses")
    return EvalReport(episodes=episodes, summary=summary)
