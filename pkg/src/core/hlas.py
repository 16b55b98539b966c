#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""High-level action space: variable-duration polynomial sub-trajectories.

A raw policy action in [-1, 1]^(1 + n_channels*(p+1)) decodes to a duration tau
and p+1 nodes per channel placed evenly over normalized time t' in [0, 1].
Each channel is the degree-p interpolating polynomial through its nodes.
"""
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import polynomial as P

from src.utils.errors import ConfigValidationError, DomainError

CHANNEL_MODES = ("control", "dynamics")
LEMMA_METHODS = ("midpoint", "least_squares")

_T_SLACK = 1e-9


# --- Configuration ---
@dataclass(frozen=True)
class HlasConfig:
    """Action-space limits. z bounds are physical (rad, or rad/s in dynamics mode)."""
    p: int
    tau_min: float
    tau_max: float
    z_min: Tuple[float, ...]
    z_max: Tuple[float, ...]
    continuity: bool = False
    channel_mode: str = "control"

    def __post_init__(self):
        if not isinstance(self.p, (int, np.integer)) or isinstance(self.p, bool) or self.p < 0:
            raise ConfigValidationError("hlas.p", f"must be an integer >= 0, got {self.p!r}")
        if not (math.isfinite(self.tau_min) and math.isfinite(self.tau_max)) or self.tau_min <= 0:
            raise ConfigValidationError("hlas.tau_min", f"must be positive and finite, got {self.tau_min!r}")
        if self.tau_min > self.tau_max:
            raise ConfigValidationError("hlas.tau_max", f"tau_min {self.tau_min} exceeds tau_max {self.tau_max}")
        if len(self.z_min) != len(self.z_max) or not self.z_min:
            raise ConfigValidationError("hlas.z_bounds_deg", "need one (min, max) pair per channel")
        for i, (lo, hi) in enumerate(zip(self.z_min, self.z_max)):
            if not lo < hi:
                raise ConfigValidationError(f"hlas.z_bounds_deg[{i}]", f"min {lo} must be below max {hi}")
        if self.channel_mode not in CHANNEL_MODES:
            raise ConfigValidationError("hlas.channel_mode", f"must be one of {CHANNEL_MODES}, got {self.channel_mode!r}")

    @property
    def n_channels(self) -> int:
        return len(self.z_min)

    @property
    def n_nodes(self) -> int:
        return self.p + 1

    @property
    def action_dim(self) -> int:
        return 1 + self.n_channels * self.n_nodes

    @property
    def node_abscissae(self) -> np.ndarray:
        if self.p == 0:
            return np.zeros(1)
        return np.arange(self.p + 1, dtype=np.float64) / self.p

    @classmethod
    def from_settings(cls, section: dict) -> "HlasConfig":
        """Builds the config from the `hlas` settings section (bounds in deg or deg/s)."""
        bounds = section.get("z_bounds_deg")
        if not isinstance(bounds, list) or not all(isinstance(b, (list, tuple)) and len(b) == 2 for b in bounds):
            raise ConfigValidationError("hlas.z_bounds_deg", "must be a list of [min, max] pairs")
        for key in ("tau_min", "tau_max"):
            if not isinstance(section.get(key), (int, float)) or isinstance(section.get(key), bool):
                raise ConfigValidationError(f"hlas.{key}", f"must be a number, got {section.get(key)!r}")
        if not isinstance(section.get("continuity"), bool):
            raise ConfigValidationError("hlas.continuity", f"must be true or false, got {section.get('continuity')!r}")
        return cls(
            p=section.get("p"),
            tau_min=float(section["tau_min"]),
            tau_max=float(section["tau_max"]),
            z_min=tuple(math.radians(float(b[0])) for b in bounds),
            z_max=tuple(math.radians(float(b[1])) for b in bounds),
            continuity=section["continuity"],
            channel_mode=section.get("channel_mode"),
        )


# --- Domain Types ---
@dataclass(frozen=True)
class DecodedAction:
    tau: float
    nodes: np.ndarray  # (n_channels, p+1), physical units


@dataclass(frozen=True)
class SegmentPoly:
    tau: float
    coeffs: np.ndarray  # (n_channels, p+1), ascending powers of t'

    @property
    def degree(self) -> int:
        return self.coeffs.shape[1] - 1

    def end_values(self) -> np.ndarray:
        return self.coeffs.sum(axis=1)


@dataclass(frozen=True)
class LemmaReport:
    m1: float
    max_integrated_error: float
    bound_satisfied: bool
    approximation: np.ndarray = field(repr=False)
    integrated_error: np.ndarray = field(repr=False)


# --- Action map ---
def decode_action(raw: Sequence[float], cfg: HlasConfig) -> DecodedAction:
    """Affine map from the clamped [-1, 1] cube onto tau and node ranges."""
    raw = np.asarray(raw, dtype=np.float64).ravel()
    if raw.shape != (cfg.action_dim,):
        raise DomainError(f"action has length {raw.size}, expected {cfg.action_dim}")
    u = (np.clip(raw, -1.0, 1.0) + 1.0) / 2.0
    tau = cfg.tau_min + u[0] * (cfg.tau_max - cfg.tau_min)
    z_min = np.asarray(cfg.z_min)[:, None]
    z_max = np.asarray(cfg.z_max)[:, None]
    nodes = z_min + u[1:].reshape(cfg.n_channels, cfg.n_nodes) * (z_max - z_min)
    return DecodedAction(tau=float(tau), nodes=nodes)


def encode_action(action: DecodedAction, cfg: HlasConfig) -> np.ndarray:
    """Inverse of decode_action for in-range actions."""
    span = cfg.tau_max - cfg.tau_min
    tau_raw = 0.0 if span == 0 else 2.0 * (action.tau - cfg.tau_min) / span - 1.0
    z_min = np.asarray(cfg.z_min)[:, None]
    z_max = np.asarray(cfg.z_max)[:, None]
    nodes_raw = 2.0 * (np.asarray(action.nodes, dtype=np.float64) - z_min) / (z_max - z_min) - 1.0
    return np.concatenate([[tau_raw], nodes_raw.ravel()])


# --- Segments ---
def fit_segment(action: DecodedAction, cfg: HlasConfig, previous: Optional[SegmentPoly] = None) -> SegmentPoly:
    """Interpolating polynomial through the nodes of every channel.

    With `cfg.continuity` and a previous segment, the first node of each
    channel is replaced by the previous segment's end value.
    """
    nodes = np.array(action.nodes, dtype=np.float64, copy=True)
    if nodes.shape != (cfg.n_channels, cfg.n_nodes):
        raise DomainError(f"nodes have shape {nodes.shape}, expected {(cfg.n_channels, cfg.n_nodes)}")
    if cfg.continuity and previous is not None:
        nodes[:, 0] = previous.end_values()
    vander = np.vander(cfg.node_abscissae, N=cfg.n_nodes, increasing=True)
    coeffs = np.linalg.solve(vander, nodes.T).T
    return SegmentPoly(tau=float(action.tau), coeffs=coeffs)


def _normalized_time(seg: SegmentPoly, t: float) -> float:
    if not (-_T_SLACK <= t <= seg.tau * (1.0 + _T_SLACK) + _T_SLACK):
        raise DomainError(f"t={t!r} outside segment [0, {seg.tau}]")
    return min(max(t / seg.tau, 0.0), 1.0)


def eval_segment(seg: SegmentPoly, t: float) -> np.ndarray:
    """Per-channel z(t) by Horner evaluation at t' = t / tau."""
    s = _normalized_time(seg, t)
    values = np.zeros(seg.coeffs.shape[0])
    for k in range(seg.degree, -1, -1):
        values = values * s + seg.coeffs[:, k]
    return values


def integrate_segment(seg: SegmentPoly, y_prev: Sequence[float], t: float) -> np.ndarray:
    """y_prev plus the physical-time integral of z from 0 to t (so dy/dt = z)."""
    s = _normalized_time(seg, t)
    powers = np.arange(1, seg.degree + 2, dtype=np.float64)
    increment = seg.tau * (seg.coeffs / powers * s ** powers).sum(axis=1)
    return np.asarray(y_prev, dtype=np.float64) + increment


# --- Approximation-error oracle ---
def lemma_error_oracle(t: Sequence[float], f_star: np.ndarray, partition: Sequence[float], p: int = 0,
                       method: str = "midpoint", atol: float = 1e-12) -> LemmaReport:
    """Checks that integrating a per-segment polynomial approximation of f* drifts at most m1*(t - t0).

    Args:
        t: Sample times, increasing.
        f_star: Samples of the reference derivative, shape (N,) or (N, channels).
        partition: Segment durations; they tile [t[0], t[0] + sum(partition)].
        p: Degree of the per-segment approximation.
        method: "midpoint" (constant at the midpoint of each segment's range, p = 0)
            or "least_squares" (degree-p least-squares fit per segment).
        atol: Round-off allowance on the inequality.

    Returns:
        LemmaReport with m1 = sup |z* - f*| over the samples, the largest integrated
        error, and whether the linear bound held at every sample.
    """
    t = np.asarray(t, dtype=np.float64)
    f = np.asarray(f_star, dtype=np.float64)
    if f.ndim == 1:
        f = f[:, None]
    durations = np.asarray(partition, dtype=np.float64)
    if durations.size == 0:
        raise DomainError("partition is empty")
    if np.any(durations <= 0):
        raise DomainError("partition durations must be positive")
    if method not in LEMMA_METHODS:
        raise DomainError(f"unknown method {method!r}; expected one of {LEMMA_METHODS}")
    if method == "midpoint" and p != 0:
        raise DomainError("midpoint construction is degree 0")
    if t.ndim != 1 or t.size < 2 or f.shape[0] != t.size:
        raise DomainError("need at least two samples with one f* row per sample")

    boundaries = t[0] + np.concatenate([[0.0], np.cumsum(durations)])
    segment_of = np.clip(np.searchsorted(boundaries, t, side="right") - 1, 0, durations.size - 1)

    z = np.empty_like(f)
    for i in np.unique(segment_of):
        mask = segment_of == i
        block = f[mask]
        if method == "midpoint":
            z[mask] = 0.5 * (block.max(axis=0) + block.min(axis=0))
        else:
            local = (t[mask] - boundaries[i]) / durations[i]
            deg = min(p, int(mask.sum()) - 1)
            for c in range(f.shape[1]):
                coeffs = P.polyfit(local, block[:, c], deg)
                z[mask, c] = P.polyval(local, coeffs)

    m1 = float(np.max(np.abs(z - f)))
    x_star = _cumulative_trapezoid(f, t)
    x_hat = _cumulative_trapezoid(z, t)
    err = np.max(np.abs(x_hat - x_star), axis=1)
    bound = m1 * (t - t[0])
    satisfied = bool(np.all(err <= bound + atol * (1.0 + np.abs(x_star).max(axis=1))))
    return LemmaReport(m1=m1, max_integrated_error=float(err.max()), bound_satisfied=satisfied,
                       approximation=z, integrated_error=err)


def _cumulative_trapezoid(y: np.ndarray, t: np.ndarray) -> np.ndarray:
    dt = np.diff(t)[:, None]
    steps = 0.5 * (y[1:] + y[:-1]) * dt
    return np.vstack([np.zeros((1, y.shape[1])), np.cumsum(steps, axis=0)])
