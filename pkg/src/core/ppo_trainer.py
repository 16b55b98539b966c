#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""PPO-clip with an adaptive anti-windup penalty on the policy mean.

The maximized objective per minibatch is

    mean(min(r*A, clip(r, 1-eps, 1+eps)*A)) - c1*mean((V - R)^2) + c2*H - c3*d

where d is the mean squared excess of |mu| over 1 - epsilon_aw. c3 is adapted
once per iteration against d_tar. Rollouts are collected by one worker per
environment on a thread pool; optimization runs on the calling thread.
"""
import logging
import math
import os
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Deque, Dict, List, Optional, Sequence, Tuple, Union

import gymnasium as gym
import numpy as np
from dotenv import load_dotenv
from tqdm import tqdm

from src.core.policy_value_net import (AdamState, PolicyParams, adam_update, backward, clip_by_global_norm,
                                       entropy, forward, forward_with_cache, log_prob, project_log_std,
                                       sample_action)
from src.utils.errors import ConfigValidationError, DomainError, NumericalFailure

load_dotenv()

# Configure logging
logging.basicConfig(level=logging.INFO, format="%(asctime)s - %(levelname)s - Trainer - %(message)s")

ADV_EPS = 1e-8


# --- Configuration ---
@dataclass(frozen=True)
class TrainerConfig:
    """PPO hyperparameters, built from the `trainer` settings section."""
    gamma: float
    lr: float
    clip_eps: float
    c1: float
    c2: float
    c3: float
    epsilon_aw: float
    d_tar: Optional[float]  # None resolves to epsilon_aw ** 2
    antiwindup_enabled: bool
    n_envs: int
    steps_per_env: int
    minibatch: int
    n_epochs: int
    gae_lambda: float
    max_grad_norm: Optional[float]
    avg_window: int

    def __post_init__(self):
        if self.d_tar is None:
            object.__setattr__(self, "d_tar", self.epsilon_aw ** 2)
        if not 0 < self.gamma <= 1:
            raise ConfigValidationError("trainer.gamma", f"must satisfy 0 < gamma <= 1, got {self.gamma!r}")
        if not 0 <= self.gae_lambda <= 1:
            raise ConfigValidationError("trainer.gae_lambda", f"must lie in [0, 1], got {self.gae_lambda!r}")
        for name in ("lr", "clip_eps", "c3", "d_tar"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ConfigValidationError(f"trainer.{name}", f"must be positive, got {value!r}")
        for name in ("c1", "c2"):
            if not getattr(self, name) >= 0:
                raise ConfigValidationError(f"trainer.{name}", f"must be >= 0, got {getattr(self, name)!r}")
        if not 0 < self.epsilon_aw < 1:
            raise ConfigValidationError("trainer.epsilon_aw", f"must lie in (0, 1), got {self.epsilon_aw!r}")
        for name in ("n_envs", "steps_per_env", "minibatch", "n_epochs", "avg_window"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise ConfigValidationError(f"trainer.{name}", f"must be an integer >= 1, got {value!r}")
        if self.batch_size % self.minibatch != 0:
            raise ConfigValidationError("trainer.minibatch",
                                        f"{self.minibatch} does not divide the collected batch of {self.batch_size}")
        if self.max_grad_norm is not None and not self.max_grad_norm > 0:
            raise ConfigValidationError("trainer.max_grad_norm", f"must be positive or null, got {self.max_grad_norm!r}")

    @property
    def batch_size(self) -> int:
        return self.n_envs * self.steps_per_env

    @classmethod
    def from_settings(cls, section: dict) -> "TrainerConfig":
        """Builds the config from the resolved `trainer` section; budget keys are ignored here."""
        def number(key):
            value = section.get(key)
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise ConfigValidationError(f"trainer.{key}", f"must be a number, got {value!r}")
            return float(value)

        def integer(key):
            value = section.get(key)
            if not isinstance(value, int) or isinstance(value, bool):
                raise ConfigValidationError(f"trainer.{key}", f"must be an integer, got {value!r}")
            return value

        def optional(key):
            if key not in section:
                raise ConfigValidationError(f"trainer.{key}", "missing required value (null disables it)")
            return None if section[key] is None else number(key)

        enabled = section.get("antiwindup_enabled")
        if not isinstance(enabled, bool):
            raise ConfigValidationError("trainer.antiwindup_enabled", f"must be true or false, got {enabled!r}")
        return cls(
            gamma=number("gamma"), lr=number("lr"), clip_eps=number("clip_eps"),
            c1=number("c1"), c2=number("c2"), c3=number("c3"), epsilon_aw=number("epsilon_aw"),
            d_tar=optional("d_tar"),
            antiwindup_enabled=enabled,
            n_envs=integer("n_envs"), steps_per_env=integer("steps_per_env"), minibatch=integer("minibatch"),
            n_epochs=integer("n_epochs"), gae_lambda=number("gae_lambda"),
            max_grad_norm=optional("max_grad_norm"),
            avg_window=integer("avg_window"),
        )


# --- Rollouts ---
@dataclass
class RolloutBatch:
    """Transitions laid out (n_envs, steps_per_env, ...). dones[e, t] marks the last step of an episode."""
    observations: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    values: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray
    mus: np.ndarray
    last_values: np.ndarray
    causes: List[List[str]]
    episode_returns: List[float] = field(default_factory=list)
    episode_lengths: List[int] = field(default_factory=list)
    episode_causes: List[str] = field(default_factory=list)

    @property
    def n_transitions(self) -> int:
        return int(self.rewards.size)


@dataclass
class WorkerRollout:
    observations: List[np.ndarray] = field(default_factory=list)
    actions: List[np.ndarray] = field(default_factory=list)
    log_probs: List[float] = field(default_factory=list)
    values: List[float] = field(default_factory=list)
    rewards: List[float] = field(default_factory=list)
    dones: List[bool] = field(default_factory=list)
    mus: List[np.ndarray] = field(default_factory=list)
    causes: List[str] = field(default_factory=list)
    last_value: float = 0.0
    episode_returns: List[float] = field(default_factory=list)
    episode_lengths: List[int] = field(default_factory=list)
    episode_causes: List[str] = field(default_factory=list)


class RolloutWorker:
    """Owns one environment and the generator its actions are sampled from.

    The environment is seeded once on construction; later resets continue its
    own random stream, so a worker's trace depends only on its seed and the
    policy snapshots it is handed.
    """

    def __init__(self, env: gym.Env, seed_seq: np.random.SeedSequence):
        self.env = env
        self.env_seed = int(seed_seq.generate_state(1)[0])
        self.rng = np.random.default_rng(seed_seq)
        self.obs, _ = env.reset(seed=self.env_seed)
        self.episode_return = 0.0
        self.episode_length = 0

    def _env_step(self, action: np.ndarray):
        try:
            return self.env.step(action)
        except DomainError as e:
            logging.warning(f"Environment step failed, recorded as constraint violation: {e}")
            return self.obs, 0.0, True, False, {"termination_cause": "constraint-violation"}

    def collect(self, params: PolicyParams, n_steps: int, deterministic: bool = False) -> WorkerRollout:
        out = WorkerRollout()
        for _ in range(n_steps):
            obs = np.asarray(self.obs, dtype=np.float64)
            mu, log_std, value = forward(obs, params)
            if deterministic:
                action, logp = mu.copy(), float(log_prob(mu, mu, log_std))
            else:
                action, logp = sample_action(mu, log_std, self.rng)
            next_obs, reward, terminated, truncated, info = self._env_step(np.clip(action, -1.0, 1.0))
            done = bool(terminated or truncated)

            out.observations.append(obs)
            out.actions.append(action)
            out.log_probs.append(float(logp))
            out.values.append(float(value))
            out.rewards.append(float(reward))
            out.dones.append(done)
            out.mus.append(mu)
            out.causes.append(str(info.get("termination_cause", "none")))

            self.episode_return += float(reward)
            self.episode_length += 1
            if done:
                out.episode_returns.append(self.episode_return)
                out.episode_lengths.append(self.episode_length)
                out.episode_causes.append(out.causes[-1])
                self.episode_return = 0.0
                self.episode_length = 0
                next_obs, _ = self.env.reset()
            self.obs = next_obs

        _, _, last_value = forward(np.asarray(self.obs, dtype=np.float64), params)
        out.last_value = float(last_value)
        return out


def make_workers(envs: Sequence[gym.Env], seed: Union[int, np.random.SeedSequence]) -> List[RolloutWorker]:
    """One worker per environment with independent child seeds of `seed`."""
    seed_seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(int(seed))
    children = seed_seq.spawn(len(envs))
    return [RolloutWorker(env, child) for env, child in zip(envs, children)]


def collect_rollouts(params: PolicyParams, workers: Sequence[RolloutWorker], steps_per_env: int,
                     n_threads: int = 1, deterministic: bool = False) -> RolloutBatch:
    """Collects steps_per_env transitions from every worker against one params snapshot."""
    if n_threads > 1 and len(workers) > 1:
        with ThreadPoolExecutor(max_workers=min(n_threads, len(workers))) as pool:
            parts = list(pool.map(lambda w: w.collect(params, steps_per_env, deterministic), workers))
    else:
        parts = [w.collect(params, steps_per_env, deterministic) for w in workers]

    batch = RolloutBatch(
        observations=np.array([p.observations for p in parts], dtype=np.float64),
        actions=np.array([p.actions for p in parts], dtype=np.float64),
        log_probs=np.array([p.log_probs for p in parts], dtype=np.float64),
        values=np.array([p.values for p in parts], dtype=np.float64),
        rewards=np.array([p.rewards for p in parts], dtype=np.float64),
        dones=np.array([p.dones for p in parts], dtype=bool),
        mus=np.array([p.mus for p in parts], dtype=np.float64),
        last_values=np.array([p.last_value for p in parts], dtype=np.float64),
        causes=[p.causes for p in parts],
    )
    for p in parts:
        batch.episode_returns.extend(p.episode_returns)
        batch.episode_lengths.extend(p.episode_lengths)
        batch.episode_causes.extend(p.episode_causes)
    return batch


def compute_advantages(batch: RolloutBatch, gamma: float, gae_lambda: float,
                       normalize: bool = True) -> Tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimates and return targets, both (n_envs, steps_per_env).

    Return targets are built from the raw advantages; normalization (mean 0,
    std 1 over the whole batch) applies only to the returned advantages.
    """
    rewards, values, dones = batch.rewards, batch.values, batch.dones
    n_steps = rewards.shape[1]
    advantages = np.zeros_like(rewards)
    running = np.zeros(rewards.shape[0])
    for t in reversed(range(n_steps)):
        next_value = batch.last_values if t == n_steps - 1 else values[:, t + 1]
        nonterminal = 1.0 - dones[:, t].astype(np.float64)
        delta = rewards[:, t] + gamma * next_value * nonterminal - values[:, t]
        running = delta + gamma * gae_lambda * nonterminal * running
        advantages[:, t] = running
    returns = advantages + values
    if normalize:
        advantages = (advantages - advantages.mean()) / (advantages.std() + ADV_EPS)
    return advantages, returns


# --- Anti-windup ---
def antiwindup_penalty(mu: np.ndarray, epsilon_aw: float) -> float:
    """Batch mean of sum_j max(|mu_j| - (1 - epsilon_aw), 0)^2. A 1-D mu is one row."""
    mu = np.atleast_2d(np.asarray(mu, dtype=np.float64))
    excess = np.maximum(np.abs(mu) - (1.0 - epsilon_aw), 0.0)
    return float(np.mean(np.sum(excess ** 2, axis=1)))


def antiwindup_penalty_grad(mu: np.ndarray, epsilon_aw: float) -> np.ndarray:
    """d(antiwindup_penalty)/d(mu), same shape as the 2-D mu."""
    mu = np.atleast_2d(np.asarray(mu, dtype=np.float64))
    excess = np.maximum(np.abs(mu) - (1.0 - epsilon_aw), 0.0)
    return 2.0 * excess * np.sign(mu) / mu.shape[0]


def adapt_penalty_coefficient(c3: float, d: float, d_tar: float) -> float:
    if not c3 > 0:
        raise DomainError(f"c3 must be positive, got {c3!r}")
    if d < d_tar / 1.5:
        return c3 / 2.0
    if d > d_tar * 1.5:
        return c3 * 2.0
    return c3


# --- Loss ---
@dataclass
class Minibatch:
    observations: np.ndarray
    actions: np.ndarray
    old_log_probs: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray

    def __len__(self) -> int:
        return int(self.observations.shape[0])


def ppo_loss(minibatch: Minibatch, params: PolicyParams, cfg: TrainerConfig,
             c3: float) -> Tuple[float, Dict[str, float], Dict[str, np.ndarray]]:
    """Objective (to maximize), diagnostics and the exact gradient of the objective.

    With anti-windup disabled the c3 term contributes nothing to either the
    objective or the gradient.
    """
    mu, log_std, value, cache = forward_with_cache(minibatch.observations, params)
    n = len(minibatch)
    adv = minibatch.advantages
    std2 = np.exp(2.0 * log_std)
    diff = minibatch.actions - mu

    new_logp = log_prob(minibatch.actions, mu, log_std)
    ratio = np.exp(new_logp - minibatch.old_log_probs)
    clipped_ratio = np.clip(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps)
    unclipped_term = ratio * adv
    clipped_term = clipped_ratio * adv
    use_unclipped = unclipped_term <= clipped_term
    surrogate = float(np.mean(np.where(use_unclipped, unclipped_term, clipped_term)))

    value_err = value - minibatch.returns
    value_loss = float(np.mean(value_err ** 2))
    ent = entropy(log_std)
    d = antiwindup_penalty(mu, cfg.epsilon_aw)

    objective = surrogate - cfg.c1 * value_loss + cfg.c2 * ent
    if cfg.antiwindup_enabled:
        objective -= c3 * d

    info = {
        "surrogate": surrogate,
        "value_loss": value_loss,
        "entropy": ent,
        "d": d,
        "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > cfg.clip_eps)),
        "approx_kl": float(np.mean(minibatch.old_log_probs - new_logp)),
    }
    if not math.isfinite(objective):
        raise NumericalFailure("non-finite PPO objective", info)

    # d(surrogate)/d(logp) per sample; the clipped branch is flat in the parameters.
    coef = np.where(use_unclipped, ratio * adv, 0.0) / n
    d_mu = coef[:, None] * diff / std2
    d_log_std = np.sum(coef[:, None] * (diff ** 2 / std2 - 1.0), axis=0) + cfg.c2
    if cfg.antiwindup_enabled:
        d_mu = d_mu - c3 * antiwindup_penalty_grad(mu, cfg.epsilon_aw)
    d_value = -2.0 * cfg.c1 * value_err / n
    grads = backward(cache, d_mu, d_value, params, d_log_std)
    return objective, info, grads


# --- Training loop ---
@dataclass
class TrainerState:
    params: PolicyParams
    cfg: TrainerConfig
    workers: List[RolloutWorker]
    adam: AdamState
    c3: float
    rng: np.random.Generator
    n_threads: int = 1
    iteration: int = 0
    env_steps: int = 0
    episodes: int = 0
    best_avg_return: float = -math.inf
    recent_returns: Deque[float] = field(default_factory=deque)
    last_good_params: Optional[PolicyParams] = None
    started: float = field(default_factory=time.perf_counter)

    @classmethod
    def create(cls, params: PolicyParams, cfg: TrainerConfig, envs: Sequence[gym.Env], seed: int,
               n_threads: Optional[int] = None, c3: Optional[float] = None, iteration: int = 0,
               env_steps: int = 0, best_avg_return: float = -math.inf) -> "TrainerState":
        """Fresh trainer state. Resumed runs pass c3, iteration, env_steps and the best average."""
        if len(envs) != cfg.n_envs:
            raise ConfigValidationError("trainer.n_envs", f"expected {cfg.n_envs} environments, got {len(envs)}")
        seed_seq = np.random.SeedSequence(int(seed))
        env_seq, shuffle_seq = seed_seq.spawn(2)
        workers = make_workers(envs, env_seq)
        return cls(
            params=params, cfg=cfg, workers=workers, adam=AdamState.zeros_like(params),
            c3=cfg.c3 if c3 is None else float(c3), rng=np.random.default_rng(shuffle_seq),
            n_threads=resolve_n_threads(cfg.n_envs) if n_threads is None else max(1, int(n_threads)),
            iteration=int(iteration), env_steps=int(env_steps), best_avg_return=float(best_avg_return),
            recent_returns=deque(maxlen=cfg.avg_window),
        )

    def average_return(self) -> float:
        return float(np.mean(self.recent_returns)) if self.recent_returns else math.nan


def resolve_n_threads(default: int) -> int:
    """Rollout threads from HLAS_N_WORKERS, falling back to one per environment."""
    raw = os.getenv("HLAS_N_WORKERS")
    if raw is None or raw == "":
        return default
    try:
        value = int(raw)
    except ValueError:
        logging.warning(f"Invalid HLAS_N_WORKERS value '{raw}', must be an integer. Defaulting to {default}.")
        return default
    if value < 1:
        logging.warning(f"HLAS_N_WORKERS cannot be less than 1, defaulting to {default}.")
        return default
    return value


def _optimize(state: TrainerState, batch: RolloutBatch, advantages: np.ndarray, returns: np.ndarray) -> Dict[str, float]:
    cfg = state.cfg
    obs = batch.observations.reshape(batch.n_transitions, -1)
    actions = batch.actions.reshape(batch.n_transitions, -1)
    old_logp = batch.log_probs.ravel()
    adv = advantages.ravel()
    ret = returns.ravel()

    totals: Dict[str, float] = {}
    n_updates = 0
    for _ in range(cfg.n_epochs):
        order = state.rng.permutation(batch.n_transitions)
        for start in range(0, batch.n_transitions, cfg.minibatch):
            idx = order[start:start + cfg.minibatch]
            mb = Minibatch(obs[idx], actions[idx], old_logp[idx], adv[idx], ret[idx])
            _, info, grads = ppo_loss(mb, state.params, cfg, state.c3)
            descent = {k: -g for k, g in grads.items()}
            descent, norm = clip_by_global_norm(descent, cfg.max_grad_norm)
            state.params = project_log_std(adam_update(state.params, descent, state.adam, cfg.lr))
            info["grad_norm"] = norm
            for key, value in info.items():
                totals[key] = totals.get(key, 0.0) + value
            n_updates += 1
    return {key: value / n_updates for key, value in totals.items()}


def train_iteration(state: TrainerState,
                    on_new_best: Optional[Callable[[TrainerState, Dict[str, Any]], None]] = None
                    ) -> Tuple[TrainerState, Dict[str, Any]]:
    """One collect, advantage and optimize cycle. Returns the state and its metrics row."""
    cfg = state.cfg
    state.last_good_params = state.params.copy()
    batch = collect_rollouts(state.params, state.workers, cfg.steps_per_env, state.n_threads)

    batch_d = antiwindup_penalty(batch.mus.reshape(batch.n_transitions, -1), cfg.epsilon_aw)
    if cfg.antiwindup_enabled:
        state.c3 = adapt_penalty_coefficient(state.c3, batch_d, cfg.d_tar)

    advantages, returns = compute_advantages(batch, cfg.gamma, cfg.gae_lambda)
    stats = _optimize(state, batch, advantages, returns)

    state.iteration += 1
    state.env_steps += batch.n_transitions
    state.episodes += len(batch.episode_returns)
    state.recent_returns.extend(batch.episode_returns)
    avg = state.average_return()

    metrics = {
        "iteration": state.iteration,
        "env_steps": state.env_steps,
        "avg_return_100": avg,
        "clip_fraction": stats["clip_fraction"],
        "value_loss": stats["value_loss"],
        "entropy": stats["entropy"],
        "d": batch_d,
        "c3": state.c3,
        "wall_clock": time.perf_counter() - state.started,
        "episodes": len(batch.episode_returns),
        "goals": sum(1 for c in batch.episode_causes if c == "goal"),
        "approx_kl": stats["approx_kl"],
        "grad_norm": stats["grad_norm"],
    }
    if math.isfinite(avg) and avg > state.best_avg_return:
        state.best_avg_return = avg
        metrics["new_best"] = True
        if on_new_best is not None:
            on_new_best(state, metrics)
    return state, metrics


def train(state: TrainerState, budget_iterations: Optional[int] = None, budget_steps: Optional[int] = None,
          budget_seconds: Optional[float] = None,
          on_iteration: Optional[Callable[[Dict[str, Any]], None]] = None,
          on_new_best: Optional[Callable[[TrainerState, Dict[str, Any]], None]] = None,
          progress: bool = True) -> TrainerState:
    """Runs train_iteration until any budget is spent. With no budget at all nothing runs.

    Budgets count from the state's current iteration and env_steps, so a resumed
    run continues toward the same totals.
    """
    if budget_iterations is None and budget_steps is None and budget_seconds is None:
        logging.warning("No training budget given; skipping training.")
        return state
    start_iteration = state.iteration
    started = time.perf_counter()

    def spent() -> bool:
        if budget_iterations is not None and state.iteration - start_iteration >= budget_iterations:
            return True
        if budget_steps is not None and state.env_steps >= budget_steps:
            return True
        return budget_seconds is not None and time.perf_counter() - started >= budget_seconds

    bar = tqdm(total=budget_iterations, desc="Training", unit="iter", disable=not progress)
    try:
        while not spent():
            state, metrics = train_iteration(state, on_new_best)
            bar.update(1)
            bar.set_postfix(avg=f"{metrics['avg_return_100']:.3f}", c3=f"{state.c3:.3g}", d=f"{metrics['d']:.2e}")
            if on_iteration is not None:
                on_iteration(metrics)
            if state.iteration % 10 == 0:
                logging.info(f"Iteration {state.iteration}: env_steps={state.env_steps}, "
                             f"avg_return={metrics['avg_return_100']:.4f}, d={metrics['d']:.3e}, c3={state.c3:.3g}")
    except NumericalFailure as e:
        logging.error(f"Training halted at iteration {state.iteration}: {e}", exc_info=True)
        if state.last_good_params is not None:
            state.params = state.last_good_params
        raise
    finally:
        bar.close()
    logging.info(f"Training finished after {state.iteration - start_iteration} iterations ({state.env_steps} env steps)")
    return state
