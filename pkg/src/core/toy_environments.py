#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""Small gymnasium environments for exercising the trainer in isolation."""
from typing import Optional

import gymnasium as gym
import numpy as np
from gymnasium import spaces

from src.utils.errors import ConfigValidationError


class WindupBanditEnv(gym.Env):
    """One-step bandit on a bounded 1-D action: reward 1 iff the clipped action is >= threshold.

    The observation is always zero, so the policy mean reduces to the output bias
    and any drift past the action limit is plain to see.
    """

    metadata = {"render_modes": []}

    def __init__(self, threshold: float):
        super().__init__()
        self.threshold = float(threshold)
        self.action_space = spaces.Box(low=-1.0, high=1.0, shape=(1,), dtype=np.float64)
        self.observation_space = spaces.Box(low=-1.0, high=1.0, shape=(1,), dtype=np.float64)

    def reset(self, *, seed: Optional[int] = None, options: Optional[dict] = None):
        super().reset(seed=seed)
        return np.zeros(1), {}

    def step(self, action):
        a = float(np.clip(np.asarray(action, dtype=np.float64).ravel()[0], -1.0, 1.0))
        hit = a >= self.threshold
        info = {"termination_cause": "goal" if hit else "timeout"}
        return np.zeros(1), 1.0 if hit else 0.0, True, False, info


class DurationChoiceEnv(gym.Env):
    """Two ways to cover a fixed horizon: long actions (few steps) or short ones (many steps).

    The sign of the first action's first component picks the duration for the
    whole episode: >= 0 selects `long_tau`, < 0 selects `short_tau`. Later
    actions are ignored. Reaching the horizon pays `terminal_reward` once, so
    under discounting the long option is worth more.

    Observation: [elapsed / horizon, choice] with choice 0 before the first
    action, +1 for long and -1 for short.
    """

    metadata = {"render_modes": []}

    def __init__(self, horizon: float, long_tau: float, short_tau: float,
                 terminal_reward: float = 1.0):
        super().__init__()
        if not (0 < short_tau < long_tau <= horizon):
            raise ConfigValidationError("problems.duration-choice", "need 0 < short_tau < long_tau <= horizon")
        self.horizon = float(horizon)
        self.long_tau = float(long_tau)
        self.short_tau = float(short_tau)
        self.terminal_reward = float(terminal_reward)
        self.action_space = spaces.Box(low=-1.0, high=1.0, shape=(1,), dtype=np.float64)
        self.observation_space = spaces.Box(low=-1.0, high=1.0, shape=(2,), dtype=np.float64)
        self._elapsed = 0.0
        self._choice = 0.0

    def steps_for(self, choice: float) -> int:
        tau = self.long_tau if choice > 0 else self.short_tau
        return int(np.ceil(self.horizon / tau - 1e-9))

    def _obs(self) -> np.ndarray:
        return np.array([self._elapsed / self.horizon, self._choice])

    def reset(self, *, seed: Optional[int] = None, options: Optional[dict] = None):
        super().reset(seed=seed)
        self._elapsed = 0.0
        self._choice = 0.0
        return self._obs(), {}

    def step(self, action):
        if self._choice == 0.0:
            first = float(np.asarray(action, dtype=np.float64).ravel()[0])
            self._choice = 1.0 if first >= 0 else -1.0
        tau = self.long_tau if self._choice > 0 else self.short_tau
        self._elapsed = min(self._elapsed + tau, self.horizon)
        done = self._elapsed >= self.horizon - 1e-9
        reward = self.terminal_reward if done else 0.0
        info = {"termination_cause": "goal" if done else "none", "tau": tau}
        return self._obs(), reward, done, False, info
