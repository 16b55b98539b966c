#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""Actor-critic MLP in numpy with a hand-written reverse pass.

Layout: shared ReLU trunk, then a private ReLU hidden layer per head. The
policy head outputs the Gaussian mean; the standard deviation is a learned,
state-independent log-std vector. The value head outputs one scalar.
Weights are stored (fan_in, fan_out) and applied as X @ W + b on row batches.
"""
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.utils.errors import DomainError, NumericalFailure

ACTIVATION = "relu"
LOG_STD_BOUNDS = (-20.0, 2.0)
HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
HALF_LOG_2PIE = 0.5 * math.log(2.0 * math.pi * math.e)

GradientBuffer = Dict[str, np.ndarray]


# --- Architecture ---
@dataclass(frozen=True)
class NetArch:
    input_dim: int
    shared_layers: Tuple[int, ...]
    head_hidden: int
    action_dim: int
    activation: str = ACTIVATION

    def __post_init__(self):
        widths = (self.input_dim, *self.shared_layers, self.head_hidden, self.action_dim)
        if any(int(w) < 1 for w in widths):
            raise DomainError(f"all layer widths must be >= 1, got {widths}")
        if self.activation != ACTIVATION:
            raise DomainError(f"unsupported activation {self.activation!r}")

    def trunk_names(self) -> List[str]:
        return [f"trunk_{i}" for i in range(len(self.shared_layers))]

    def weight_shapes(self) -> Dict[str, Tuple[int, ...]]:
        """Shapes of every weight/bias block in forward order (log_std excluded)."""
        shapes: Dict[str, Tuple[int, ...]] = {}
        fan_in = self.input_dim
        for name, width in zip(self.trunk_names(), self.shared_layers):
            shapes[f"{name}.W"] = (fan_in, width)
            shapes[f"{name}.b"] = (width,)
            fan_in = width
        for head, out_dim in (("pi", self.action_dim), ("vf", 1)):
            shapes[f"{head}_hidden.W"] = (fan_in, self.head_hidden)
            shapes[f"{head}_hidden.b"] = (self.head_hidden,)
            shapes[f"{head}_out.W"] = (self.head_hidden, out_dim)
            shapes[f"{head}_out.b"] = (out_dim,)
        return shapes

    def param_count(self) -> int:
        return sum(int(np.prod(s)) for s in self.weight_shapes().values()) + self.action_dim

    @classmethod
    def from_settings(cls, network: dict, input_dim: int, action_dim: int) -> "NetArch":
        return cls(input_dim=int(input_dim), shared_layers=tuple(int(w) for w in network["shared_layers"]),
                   head_hidden=int(network["head_hidden"]), action_dim=int(action_dim),
                   activation=network["activation"])


@dataclass
class PolicyParams:
    arch: NetArch
    weights: Dict[str, np.ndarray]
    log_std: np.ndarray
    obs_scales: np.ndarray

    def copy(self) -> "PolicyParams":
        return PolicyParams(arch=self.arch, weights={k: v.copy() for k, v in self.weights.items()},
                            log_std=self.log_std.copy(), obs_scales=self.obs_scales.copy())

    def blocks(self) -> Dict[str, np.ndarray]:
        """Every trainable block, log_std included, keyed like a GradientBuffer."""
        return {**self.weights, "log_std": self.log_std}

    def with_blocks(self, blocks: Dict[str, np.ndarray]) -> "PolicyParams":
        weights = {k: blocks[k] for k in self.weights}
        return PolicyParams(arch=self.arch, weights=weights, log_std=blocks["log_std"], obs_scales=self.obs_scales)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.blocks().values())


def _orthogonal(shape: Tuple[int, int], gain: float, rng: np.random.Generator) -> np.ndarray:
    rows, cols = shape
    flat = rng.standard_normal((rows, cols))
    if rows < cols:
        flat = flat.T
    q, r = np.linalg.qr(flat)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q


def init_params(arch: NetArch, rng: np.random.Generator, obs_scales: Optional[Sequence[float]] = None) -> PolicyParams:
    """Orthogonal weights (gain sqrt(2) hidden, 0.01 policy output, 1 value output), zero biases, log_std 0."""
    weights: Dict[str, np.ndarray] = {}
    for name, shape in arch.weight_shapes().items():
        if name.endswith(".b"):
            weights[name] = np.zeros(shape)
            continue
        if name.startswith("pi_out"):
            gain = 0.01
        elif name.startswith("vf_out"):
            gain = 1.0
        else:
            gain = math.sqrt(2.0)
        weights[name] = _orthogonal(shape, gain, rng)
    scales = np.ones(arch.input_dim) if obs_scales is None else np.asarray(obs_scales, dtype=np.float64)
    return PolicyParams(arch=arch, weights=weights, log_std=np.zeros(arch.action_dim), obs_scales=scales)


# --- Forward pass ---
@dataclass
class ForwardCache:
    """Layer inputs and pre-activations recorded for `backward`."""
    inputs: Dict[str, np.ndarray] = field(default_factory=dict)
    pre_activations: Dict[str, np.ndarray] = field(default_factory=dict)
    batch_size: int = 0


def _relu(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0)


def forward_with_cache(obs: np.ndarray, params: PolicyParams) -> Tuple[np.ndarray, np.ndarray, np.ndarray, ForwardCache]:
    """Batched forward pass. obs is (B, input_dim); returns mu (B, A), log_std (A,), value (B,), cache."""
    x = np.asarray(obs, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.arch.input_dim:
        raise DomainError(f"observation batch has shape {x.shape}, expected (B, {params.arch.input_dim})")
    w = params.weights
    cache = ForwardCache(batch_size=x.shape[0])
    h = x
    for name in params.arch.trunk_names():
        cache.inputs[name] = h
        z = h @ w[f"{name}.W"] + w[f"{name}.b"]
        cache.pre_activations[name] = z
        h = _relu(z)
    trunk_out = h
    outputs = {}
    for head in ("pi", "vf"):
        cache.inputs[f"{head}_hidden"] = trunk_out
        z = trunk_out @ w[f"{head}_hidden.W"] + w[f"{head}_hidden.b"]
        cache.pre_activations[f"{head}_hidden"] = z
        hidden = _relu(z)
        cache.inputs[f"{head}_out"] = hidden
        outputs[head] = hidden @ w[f"{head}_out.W"] + w[f"{head}_out.b"]
    mu = outputs["pi"]
    value = outputs["vf"][:, 0]
    if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(value))):
        raise NumericalFailure("non-finite network output",
                               {"mu_finite": bool(np.all(np.isfinite(mu))), "value_finite": bool(np.all(np.isfinite(value)))})
    return mu, params.log_std, value, cache


def forward(obs: np.ndarray, params: PolicyParams) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Forward pass for one observation (returns mu (A,), log_std, float value) or a batch."""
    x = np.asarray(obs, dtype=np.float64)
    single = x.ndim == 1
    mu, log_std, value, _ = forward_with_cache(x[None, :] if single else x, params)
    if single:
        return mu[0], log_std, value[0]
    return mu, log_std, value


def deterministic_action(obs: np.ndarray, params: PolicyParams) -> np.ndarray:
    """The action mean; no sampling."""
    mu, _, _ = forward(obs, params)
    return mu


# --- Gaussian policy ---
def log_prob(actions: np.ndarray, mu: np.ndarray, log_std: np.ndarray) -> np.ndarray:
    """Diagonal-Gaussian log-density summed over the last axis."""
    std = np.exp(log_std)
    return np.sum(-log_std - HALF_LOG_2PI - 0.5 * ((actions - mu) / std) ** 2, axis=-1)


def sample_action(mu: np.ndarray, log_std: np.ndarray, rng: np.random.Generator) -> Tuple[np.ndarray, float]:
    """a = mu + exp(log_std) * z with z standard normal."""
    z = rng.standard_normal(np.shape(mu))
    a = mu + np.exp(log_std) * z
    return a, log_prob(a, mu, log_std)


def entropy(log_std: np.ndarray) -> float:
    return float(np.sum(log_std + HALF_LOG_2PIE))


# --- Reverse pass ---
def backward(cache: ForwardCache, d_mu: np.ndarray, d_value: np.ndarray, params: PolicyParams,
             d_log_std: Optional[np.ndarray] = None) -> GradientBuffer:
    """Reverse-mode gradients of a scalar whose adjoints at the outputs are d_mu (B, A) and d_value (B,)."""
    d_mu = np.asarray(d_mu, dtype=np.float64)
    d_value = np.asarray(d_value, dtype=np.float64).reshape(-1, 1)
    batch = cache.batch_size
    if d_mu.shape != (batch, params.arch.action_dim) or d_value.shape != (batch, 1):
        raise DomainError(f"adjoint shapes {d_mu.shape}, {d_value.shape} do not match batch {batch}")
    w = params.weights
    grads: GradientBuffer = {}

    d_trunk_out = 0.0
    for head, d_out in (("pi", d_mu), ("vf", d_value)):
        hidden = cache.inputs[f"{head}_out"]
        grads[f"{head}_out.W"] = hidden.T @ d_out
        grads[f"{head}_out.b"] = d_out.sum(axis=0)
        d_hidden = d_out @ w[f"{head}_out.W"].T
        dz = d_hidden * (cache.pre_activations[f"{head}_hidden"] > 0)
        grads[f"{head}_hidden.W"] = cache.inputs[f"{head}_hidden"].T @ dz
        grads[f"{head}_hidden.b"] = dz.sum(axis=0)
        d_trunk_out = d_trunk_out + dz @ w[f"{head}_hidden.W"].T

    d_h = d_trunk_out
    for name in reversed(params.arch.trunk_names()):
        dz = d_h * (cache.pre_activations[name] > 0)
        grads[f"{name}.W"] = cache.inputs[name].T @ dz
        grads[f"{name}.b"] = dz.sum(axis=0)
        d_h = dz @ w[f"{name}.W"].T

    grads["log_std"] = np.zeros(params.arch.action_dim) if d_log_std is None else np.asarray(d_log_std, dtype=np.float64)
    return grads


def global_norm(grads: GradientBuffer) -> float:
    return float(math.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_by_global_norm(grads: GradientBuffer, max_norm: Optional[float]) -> Tuple[GradientBuffer, float]:
    """Scales all blocks together so their joint L2 norm is at most max_norm. Returns (grads, pre-clip norm)."""
    norm = global_norm(grads)
    if max_norm is None or norm <= max_norm or norm == 0.0:
        return grads, norm
    scale = max_norm / norm
    return {k: g * scale for k, g in grads.items()}, norm


# --- Optimizer ---
@dataclass
class AdamState:
    m: Dict[str, np.ndarray]
    v: Dict[str, np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: PolicyParams, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        blocks = params.blocks()
        return cls(m={k: np.zeros_like(b) for k, b in blocks.items()},
                   v={k: np.zeros_like(b) for k, b in blocks.items()}, beta1=beta1, beta2=beta2, eps=eps)


def adam_update(params: PolicyParams, grads: GradientBuffer, state: AdamState, lr: float) -> PolicyParams:
    """One bias-corrected Adam step descending `grads`. Returns new params; `state` is advanced in place."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericalFailure("non-finite gradient", {"block": name, "step": state.step})
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1 ** state.step
    correction2 = 1.0 - b2 ** state.step
    updated = {}
    for name, value in params.blocks().items():
        g = grads.get(name)
        if g is None:
            updated[name] = value
            continue
        state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        state.v[name] = b2 * state.v[name] + (1.0 - b2) * g * g
        m_hat = state.m[name] / correction1
        v_hat = state.v[name] / correction2
        updated[name] = value - lr * m_hat / (np.sqrt(v_hat) + state.eps)
        if not np.all(np.isfinite(updated[name])):
            raise NumericalFailure("non-finite parameter after update", {"block": name, "step": state.step})
    return params.with_blocks(updated)


def project_log_std(params: PolicyParams, bounds: Tuple[float, float] = LOG_STD_BOUNDS) -> PolicyParams:
    params.log_std = np.clip(params.log_std, bounds[0], bounds[1])
    return params
