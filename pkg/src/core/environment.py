#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""Episodic reentry MDP over the high-level action space.

One action step decodes a raw action into a duration and a polynomial profile,
then flies it for round(tau/dt) fixed RK4 steps. Path constraints (and debris
for the avoidance problem) are checked after every dt step; the terminal
tolerance is checked only at the end of the action step.
"""
import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import gymnasium as gym
import numpy as np
from gymnasium import spaces

from src.core.hlas import DecodedAction, HlasConfig, SegmentPoly, decode_action, eval_segment, fit_segment
from src.core.tracking_controller import AeroForceCommand, DesiredRates, control_from_desired_dynamics
from src.core.vehicle_dynamics import (ControlInput, VehicleParams, VehicleState, aero_forces,
                                       check_path_constraints, clamp_controls, rk4_step)
from src.utils.errors import ConfigValidationError, DomainError

# Configure logging
logging.basicConfig(level=logging.INFO, format="%(asctime)s - %(levelname)s - Environment - %(message)s")

LATITUDE_MAX = "latitude-max"
DEBRIS_AVOIDANCE = "debris-avoidance"
PROBLEM_KINDS = (LATITUDE_MAX, DEBRIS_AVOIDANCE)

VEHICLE_KEYS = ("h", "v", "theta", "phi", "gamma", "psi", "alpha", "sigma")
_LINEAR_KEYS = ("h", "v")


class TerminationCause(str, Enum):
    GOAL = "goal"
    CONSTRAINT = "constraint-violation"
    OBSTACLE = "obstacle"
    TIMEOUT = "timeout"
    NONE = "none"


# --- Problem definition ---
@dataclass(frozen=True)
class RingSpec:
    """Semicircle of start positions south of the target (radians)."""
    radius: float
    radius_halfwidth: float
    bearing_halfwidth: float
    heading_error: float


@dataclass(frozen=True)
class ProblemSpec:
    problem_kind: str
    variant: str
    terminal_target: Tuple[float, float, float]      # (h, v, gamma) or (h, theta, phi)
    terminal_scales: Tuple[float, float, float]
    terminal_tolerances: Tuple[float, float, float]
    c0: float
    ic_nominal: VehicleState
    ic_halfwidths: Tuple[float, ...]                 # 8 components, same order as the state
    max_action_steps: int
    dt: float
    obs_scales: Tuple[float, ...]
    ring: Optional[RingSpec] = None
    ic_scale: float = 1.0

    def __post_init__(self):
        if self.problem_kind not in PROBLEM_KINDS:
            raise ConfigValidationError("experiment.problem", f"not a reentry problem: {self.problem_kind!r}")
        for name in ("terminal_scales", "terminal_tolerances"):
            values = getattr(self, name)
            if len(values) != 3 or any(not (v > 0 and math.isfinite(v)) for v in values):
                raise ConfigValidationError(f"problems.{self.problem_kind}.{name}", "three strictly positive values required")
        if len(self.ic_halfwidths) != 8 or any(w < 0 for w in self.ic_halfwidths):
            raise ConfigValidationError(f"problems.{self.problem_kind}.ic_halfwidths", "eight non-negative half-widths required")
        if self.max_action_steps < 1:
            raise ConfigValidationError("simulation.max_action_steps", "must be >= 1")
        if not self.dt > 0:
            raise ConfigValidationError("simulation.dt", "must be positive")
        if len(self.obs_scales) != 8 or any(not s > 0 for s in self.obs_scales):
            raise ConfigValidationError("simulation.obs_scales", "eight positive scales required")
        if not self.ic_scale >= 0:
            raise ConfigValidationError("evaluation.ic_scale", "must be >= 0")
        if self.problem_kind == DEBRIS_AVOIDANCE and self.ring is None:
            raise ConfigValidationError(f"problems.{DEBRIS_AVOIDANCE}.ring", "start ring is required")

    def with_ic_scale(self, ic_scale: float) -> "ProblemSpec":
        return replace(self, ic_scale=float(ic_scale))

    @classmethod
    def from_settings(cls, settings: dict, ic_scale: float = 1.0) -> "ProblemSpec":
        problem = settings["experiment"]["problem"]
        section = settings["problems"][problem]
        sim = settings["simulation"]
        prefix = f"problems.{problem}"

        if problem == LATITUDE_MAX:
            target_keys = ("h", "v", "gamma")
        elif problem == DEBRIS_AVOIDANCE:
            target_keys = ("h", "theta", "phi")
        else:
            raise ConfigValidationError("experiment.problem", f"not a reentry problem: {problem!r}")

        nominal = section.get("ic_nominal", {})
        halfwidths = section.get("ic_halfwidths", {})
        ring = None
        if problem == DEBRIS_AVOIDANCE:
            raw_ring = section.get("ring") or {}
            ring = RingSpec(
                radius=math.radians(_number(raw_ring, "radius_deg", f"{prefix}.ring")),
                radius_halfwidth=math.radians(_number(raw_ring, "radius_halfwidth_deg", f"{prefix}.ring")),
                bearing_halfwidth=math.radians(_number(raw_ring, "bearing_halfwidth_deg", f"{prefix}.ring")),
                heading_error=math.radians(_number(raw_ring, "heading_error_deg", f"{prefix}.ring")),
            )
        return cls(
            problem_kind=problem,
            variant=settings["experiment"]["variant"],
            terminal_target=tuple(_si(section.get("terminal_target", {}), k, f"{prefix}.terminal_target") for k in target_keys),
            terminal_scales=tuple(_si(section.get("terminal_scales", {}), k, f"{prefix}.terminal_scales") for k in target_keys),
            terminal_tolerances=tuple(_si(section.get("terminal_tolerances", {}), k, f"{prefix}.terminal_tolerances")
                                      for k in target_keys),
            c0=_number(section, "c0", prefix),
            ic_nominal=VehicleState.from_array(
                [_si(nominal, k, f"{prefix}.ic_nominal", default=0.0) for k in VEHICLE_KEYS]),
            ic_halfwidths=tuple(_si(halfwidths, k, f"{prefix}.ic_halfwidths", default=0.0) for k in VEHICLE_KEYS),
            max_action_steps=int(sim["max_action_steps"]),
            dt=float(sim["dt"]),
            obs_scales=tuple(float(s) for s in sim["obs_scales"]),
            ring=ring,
            ic_scale=float(ic_scale),
        )


def _number(section: dict, key: str, prefix: str) -> float:
    value = section.get(key)
    if not isinstance(value, (int, float)) or isinstance(value, bool) or not math.isfinite(value):
        raise ConfigValidationError(f"{prefix}.{key}", f"must be a finite number, got {value!r}")
    return float(value)


def _si(section: dict, key: str, prefix: str, default: Optional[float] = None) -> float:
    """Reads `key` (SI) or `key_deg` (converted to radians) from a config mapping."""
    if key in _LINEAR_KEYS or key in section:
        if key not in section and default is not None:
            return default
        return _number(section, key, prefix)
    if f"{key}_deg" in section:
        return math.radians(_number(section, f"{key}_deg", prefix))
    if default is not None:
        return default
    raise ConfigValidationError(f"{prefix}.{key}_deg", "missing required value")


@dataclass(frozen=True)
class Ellipse:
    center_theta: float
    center_phi: float
    semi_axis_theta: float
    semi_axis_phi: float

    def __post_init__(self):
        if not (self.semi_axis_theta > 0 and self.semi_axis_phi > 0):
            raise ConfigValidationError("obstacles.ellipses", "semi-axes must be strictly positive")


@dataclass(frozen=True)
class ObstacleMap:
    ellipses: Tuple[Ellipse, ...] = ()

    def __len__(self) -> int:
        return len(self.ellipses)


@dataclass
class TraceSample:
    """One dt-step row of an episode trace."""
    t: float
    state: VehicleState
    control: Optional[ControlInput]
    q: float
    action_step_index: int
    force: Optional[AeroForceCommand] = None
    saturated: bool = False
    reward: float = 0.0
    termination_cause: str = ""


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    terminated: bool
    termination_cause: TerminationCause
    info: Dict[str, Any] = field(default_factory=dict)


# --- Observation and initial conditions ---
def observe(state: VehicleState, spec: ProblemSpec) -> np.ndarray:
    return state.as_array() / np.asarray(spec.obs_scales, dtype=np.float64)


def sample_initial_state(spec: ProblemSpec, rng: np.random.Generator) -> VehicleState:
    """Uniform perturbation of the nominal start, every half-width scaled by spec.ic_scale."""
    s = spec.ic_scale
    u = rng.uniform(-1.0, 1.0, size=8)
    x = spec.ic_nominal.as_array() + s * np.asarray(spec.ic_halfwidths) * u
    if spec.problem_kind == LATITUDE_MAX:
        return VehicleState.from_array(x)

    ring = spec.ring
    w = rng.uniform(-1.0, 1.0, size=3)
    h_f, theta_f, phi_f = spec.terminal_target
    radius = ring.radius + s * ring.radius_halfwidth * w[0]
    bearing = s * ring.bearing_halfwidth * w[1]
    theta = theta_f + radius * math.sin(bearing)
    phi = phi_f - radius * math.cos(bearing)
    psi = math.atan2(theta_f - theta, phi_f - phi) + s * ring.heading_error * w[2]
    return VehicleState(h=float(x[0]), v=float(x[1]), theta=theta, phi=phi, gamma=float(x[4]), psi=psi,
                        alpha=float(x[6]), sigma=float(x[7]))


def reset(spec: ProblemSpec, seed: Optional[int] = None) -> Tuple[VehicleState, np.ndarray]:
    state = sample_initial_state(spec, np.random.default_rng(seed))
    return state, observe(state, spec)


# --- Rewards and termination ---
def horizon_reward(phi: float) -> float:
    """Latitude reward, with latitude in degrees: exp(phi) below zero, 1 + phi above."""
    phi_deg = math.degrees(phi)
    return math.exp(phi_deg) if phi_deg < 0 else 1.0 + phi_deg


def _terminal_components(state: VehicleState, spec: ProblemSpec) -> Tuple[float, float, float]:
    if spec.problem_kind == LATITUDE_MAX:
        return state.h, state.v, state.gamma
    return state.h, state.theta, state.phi


def terminal_miss_distance(state: VehicleState, spec: ProblemSpec) -> float:
    """Terminal ellipsoid Psi: sum of squared scaled offsets from the target."""
    comps = _terminal_components(state, spec)
    return sum(((c - t) / s) ** 2 for c, t, s in zip(comps, spec.terminal_target, spec.terminal_scales))


def terminal_check(state: VehicleState, spec: ProblemSpec) -> bool:
    comps = _terminal_components(state, spec)
    return all(abs(c - t) <= tol for c, t, tol in zip(comps, spec.terminal_target, spec.terminal_tolerances))


def reward_fn(state_end: VehicleState, cause: TerminationCause, spec: ProblemSpec) -> float:
    cause = TerminationCause(cause)
    if cause == TerminationCause.GOAL:
        psi = terminal_miss_distance(state_end, spec)
        bonus = spec.c0 * (1.0 if psi <= 1.0 else 1.0 / psi)
        if spec.problem_kind == LATITUDE_MAX:
            return horizon_reward(state_end.phi) + bonus
        return bonus
    if cause == TerminationCause.TIMEOUT and spec.problem_kind == LATITUDE_MAX:
        return horizon_reward(state_end.phi)
    return 0.0


def obstacle_check(state: VehicleState, obstacle_map: Optional[ObstacleMap]) -> bool:
    """Boundary points count as hits."""
    if not obstacle_map:
        return False
    for e in obstacle_map.ellipses:
        if ((state.theta - e.center_theta) / e.semi_axis_theta) ** 2 + ((state.phi - e.center_phi) / e.semi_axis_phi) ** 2 <= 1.0:
            return True
    return False


def generate_debris_field(seed: int, count: int, center: Tuple[float, float], inner_radius: float,
                          outer_radius: float, semi_axis_range: Tuple[float, float]) -> ObstacleMap:
    """Random ellipses inside the semicircle annulus south of `center` (all angles in radians)."""
    if count < 0 or not 0 <= inner_radius < outer_radius or not 0 < semi_axis_range[0] <= semi_axis_range[1]:
        raise ConfigValidationError("obstacles", "invalid debris field geometry")
    rng = np.random.default_rng(seed)
    theta_c, phi_c = center
    ellipses = []
    for _ in range(int(count)):
        radius = rng.uniform(inner_radius, outer_radius)
        bearing = rng.uniform(-0.5 * math.pi, 0.5 * math.pi)
        a_theta, a_phi = rng.uniform(semi_axis_range[0], semi_axis_range[1], size=2)
        ellipses.append(Ellipse(theta_c + radius * math.sin(bearing), phi_c - radius * math.cos(bearing),
                                float(a_theta), float(a_phi)))
    return ObstacleMap(tuple(ellipses))


def obstacle_map_from_settings(settings: dict, spec: ProblemSpec) -> Optional[ObstacleMap]:
    """Debris map for the avoidance problem; an explicit ellipse list replaces the generated field."""
    if spec.problem_kind != DEBRIS_AVOIDANCE:
        return None
    section = settings["problems"][DEBRIS_AVOIDANCE].get("obstacles") or {}
    explicit = section.get("ellipses") or []
    if explicit:
        ellipses = []
        for i, row in enumerate(explicit):
            if not isinstance(row, (list, tuple)) or len(row) != 4:
                raise ConfigValidationError(f"problems.{DEBRIS_AVOIDANCE}.obstacles.ellipses[{i}]",
                                            "expected [theta_deg, phi_deg, semi_axis_theta_deg, semi_axis_phi_deg]")
            ellipses.append(Ellipse(*(math.radians(float(v)) for v in row)))
        logging.info(f"Using {len(ellipses)} configured debris ellipses")
        return ObstacleMap(tuple(ellipses))
    prefix = f"problems.{DEBRIS_AVOIDANCE}.obstacles"
    semi = section.get("semi_axis_range_deg")
    if not isinstance(semi, (list, tuple)) or len(semi) != 2:
        raise ConfigValidationError(f"{prefix}.semi_axis_range_deg", f"expected [min, max], got {semi!r}")
    obstacle_map = generate_debris_field(
        seed=int(_number(section, "seed", prefix)),
        count=int(_number(section, "count", prefix)),
        center=(spec.terminal_target[1], spec.terminal_target[2]),
        inner_radius=math.radians(_number(section, "inner_radius_deg", prefix)),
        outer_radius=math.radians(_number(section, "outer_radius_deg", prefix)),
        semi_axis_range=(math.radians(float(semi[0])), math.radians(float(semi[1]))),
    )
    logging.info(f"Generated debris field with {len(obstacle_map)} ellipses")
    return obstacle_map


# --- Sub-horizon execution ---
def sub_horizon_steps(tau: float, dt: float, tau_max: float) -> int:
    """Integrator steps for an action of duration tau: round(tau/dt), at least one, never beyond tau_max."""
    n = max(1, int(round(tau / dt)))
    cap = max(1, int(math.floor(tau_max / dt + 1e-9)))
    return min(n, cap)


def step(state: VehicleState, action: DecodedAction, spec: ProblemSpec, params: VehicleParams,
         hlas_cfg: HlasConfig, obstacle_map: Optional[ObstacleMap] = None, *, action_step_index: int = 0,
         elapsed: float = 0.0, previous_segment: Optional[SegmentPoly] = None,
         trace: Optional[List[TraceSample]] = None) -> Tuple[StepResult, VehicleState]:
    """Flies one decoded action and returns the step result with the last feasible state.

    Segment values are sampled at the midpoint of each dt step, t = (k + 0.5) * dt,
    and held over it, so the nodes at t' = 0 and t' = 1 are never applied exactly;
    the last command sits half a step before the segment end.
    The first violation ends the episode at once with zero reward; the violating
    sample is still appended to `trace`.
    """
    dt = spec.dt
    n_sub = sub_horizon_steps(action.tau, dt, hlas_cfg.tau_max)
    tau_eff = n_sub * dt
    segment = fit_segment(DecodedAction(tau=tau_eff, nodes=action.nodes), hlas_cfg, previous_segment)

    current = state
    cause = TerminationCause.NONE
    violated = None
    steps_done = 0
    saturation_count = 0
    heating_peak = -math.inf
    last_force: Optional[AeroForceCommand] = None
    first_row = len(trace) if trace is not None else 0

    for k in range(n_sub):
        z = eval_segment(segment, (k + 0.5) * dt)
        try:
            if hlas_cfg.channel_mode == "control":
                raw = ControlInput(float(z[0]), float(z[1]))
                control = clamp_controls(raw, params)
                force = None
                saturated = control != raw
            else:
                command = control_from_desired_dynamics(current, DesiredRates(float(z[0]), float(z[1])), params)
                control, force = command.control, command.force
                saturated = force.saturated
            nxt = rk4_step(current, control, dt, params)
            q = aero_forces(nxt, params).q
        except DomainError as e:
            logging.warning(f"Domain error during action step {action_step_index}, treated as violation: {e}")
            cause, violated = TerminationCause.CONSTRAINT, "domain"
            break

        steps_done += 1
        saturation_count += int(saturated)
        heating_peak = max(heating_peak, q)
        last_force = force
        if trace is not None:
            trace.append(TraceSample(t=elapsed + steps_done * dt, state=nxt, control=control, q=q,
                                     action_step_index=action_step_index, force=force, saturated=saturated))

        verdict = check_path_constraints(nxt, q, params)
        if not verdict.ok:
            cause, violated = TerminationCause.CONSTRAINT, verdict.violated
            break
        if obstacle_check(nxt, obstacle_map):
            cause = TerminationCause.OBSTACLE
            break
        current = nxt

    if cause == TerminationCause.NONE:
        if terminal_check(current, spec):
            cause = TerminationCause.GOAL
        elif action_step_index + 1 >= spec.max_action_steps:
            cause = TerminationCause.TIMEOUT

    reward = reward_fn(current, cause, spec)
    if trace is not None and len(trace) > first_row:
        trace[-1].reward = reward
        if cause != TerminationCause.NONE:
            trace[-1].termination_cause = cause.value

    info = {
        "termination_cause": cause.value,
        "violated_constraint": violated,
        "elapsed_time": elapsed + steps_done * dt,
        "tau": action.tau,
        "tau_eff": tau_eff,
        "n_sub": n_sub,
        "heating_peak": heating_peak,
        "saturation_count": saturation_count,
        "controller": last_force,
        "segment": segment,
    }
    result = StepResult(observation=observe(current, spec), reward=reward,
                        terminated=cause != TerminationCause.NONE, termination_cause=cause, info=info)
    return result, current


# --- Gymnasium wrapper ---
class ReentryEnv(gym.Env):
    """Gymnasium environment around `step`. Timeouts are terminations, so `truncated` is always False."""

    metadata = {"render_modes": []}

    def __init__(self, spec: ProblemSpec, params: VehicleParams, hlas_cfg: HlasConfig,
                 obstacle_map: Optional[ObstacleMap] = None, record_trace: bool = False):
        super().__init__()
        self.problem = spec
        self.params = params
        self.hlas_cfg = hlas_cfg
        self.obstacle_map = obstacle_map
        self.record_trace = record_trace
        self.action_space = spaces.Box(low=-1.0, high=1.0, shape=(hlas_cfg.action_dim,), dtype=np.float64)
        self.observation_space = spaces.Box(low=-np.inf, high=np.inf, shape=(8,), dtype=np.float64)
        self.state: Optional[VehicleState] = None
        self.trace: List[TraceSample] = []
        self._segment: Optional[SegmentPoly] = None
        self._elapsed = 0.0
        self._action_steps = 0
        self._done = True
        self.episode_return = 0.0

    def reset(self, *, seed: Optional[int] = None, options: Optional[dict] = None):
        super().reset(seed=seed)
        options = options or {}
        if "state" in options:
            self.state = options["state"]
        else:
            self.state = sample_initial_state(self.problem, self.np_random)
        self._segment = None
        self._elapsed = 0.0
        self._action_steps = 0
        self._done = False
        self.episode_return = 0.0
        self.trace = []
        if self.record_trace:
            q = aero_forces(self.state, self.params).q
            self.trace.append(TraceSample(t=0.0, state=self.state, control=None, q=q, action_step_index=0))
        return observe(self.state, self.problem), {"state": self.state}

    def decode(self, action: Sequence[float]) -> DecodedAction:
        return decode_action(np.clip(np.asarray(action, dtype=np.float64), -1.0, 1.0), self.hlas_cfg)

    def step(self, action):
        if self._done:
            raise DomainError("episode has ended; call reset() first")
        decoded = self.decode(action)
        result, self.state = step(
            self.state, decoded, self.problem, self.params, self.hlas_cfg, self.obstacle_map,
            action_step_index=self._action_steps, elapsed=self._elapsed, previous_segment=self._segment,
            trace=self.trace if self.record_trace else None,
        )
        self._segment = result.info["segment"]
        self._elapsed = result.info["elapsed_time"]
        self._action_steps += 1
        self._done = result.terminated
        self.episode_return += result.reward
        info = dict(result.info)
        info["decoded_action"] = decoded
        info["state"] = self.state
        info["action_steps"] = self._action_steps
        return result.observation, result.reward, result.terminated, False, info
