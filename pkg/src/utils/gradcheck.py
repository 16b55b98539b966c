#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""Finite-difference self-checks of the network and PPO objective gradients.

Every check runs on a small random instance drawn from a fixed seed, so a
report is reproducible. Instances are resampled until they sit away from the
non-smooth points of the computation (ReLU kinks, clip edges of the ratio,
the anti-windup activation boundary) where central differences are not valid.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np

from src.core.policy_value_net import NetArch, PolicyParams, backward, forward_with_cache, log_prob
from src.core.ppo_trainer import Minibatch, TrainerConfig, antiwindup_penalty, antiwindup_penalty_grad, ppo_loss
from src.utils.errors import ConfigValidationError, OracleFailure

# Configure logging
logging.basicConfig(level=logging.INFO, format="%(asctime)s - %(levelname)s - Gradcheck - %(message)s")

FD_STEP = 1e-5
TOLERANCE = 1e-6
FAULT_SIZE = 1e-3
BOUNDARY_OFFSET = 1e-7

_ARCH = NetArch(input_dim=8, shared_layers=(16, 16), head_hidden=16, action_dim=3)
_BATCH = 4
_KINK_MARGIN = 2e-3
_MAX_DRAWS = 200


@dataclass
class CheckResult:
    check: str
    block: str
    error: float
    passed: bool


@dataclass
class GradcheckReport:
    seed: int
    tolerance: float
    results: List[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    @property
    def max_error(self) -> float:
        return max((r.error for r in self.results), default=0.0)

    def failures(self) -> List[CheckResult]:
        return [r for r in self.results if not r.passed]

    def summary(self) -> Dict[str, float]:
        """Largest error per check."""
        out: Dict[str, float] = {}
        for r in self.results:
            out[r.check] = max(out.get(r.check, 0.0), r.error)
        return out

    def format(self) -> str:
        lines = [f"gradcheck seed={self.seed} tolerance={self.tolerance:.1e}"]
        for r in self.results:
            lines.append(f"  {'ok  ' if r.passed else 'FAIL'} {r.check:<20} {r.block:<16} {r.error:.3e}")
        lines.append(f"max relative error {self.max_error:.3e}: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    a = np.ravel(analytic)
    n = np.ravel(numeric)
    scale = max(np.linalg.norm(a), np.linalg.norm(n), 1e-6)
    return float(np.linalg.norm(a - n) / scale)


def numeric_gradient(fn: Callable[[PolicyParams], float], params: PolicyParams, step: float = FD_STEP) -> Dict[str, np.ndarray]:
    """Central differences of fn with respect to every block of params."""
    grads = {}
    for name, block in params.blocks().items():
        grad = np.zeros_like(block)
        for idx in np.ndindex(block.shape):
            original = block[idx]
            block[idx] = original + step
            plus = fn(params)
            block[idx] = original - step
            minus = fn(params)
            block[idx] = original
            grad[idx] = (plus - minus) / (2.0 * step)
        grads[name] = grad
    return grads


def _random_params(rng: np.random.Generator) -> PolicyParams:
    weights = {}
    for name, shape in _ARCH.weight_shapes().items():
        if name.endswith(".W"):
            weights[name] = rng.standard_normal(shape) / np.sqrt(shape[0])
        else:
            weights[name] = 0.1 * rng.standard_normal(shape)
    log_std = rng.uniform(-0.5, 0.5, size=_ARCH.action_dim)
    return PolicyParams(arch=_ARCH, weights=weights, log_std=log_std, obs_scales=np.ones(_ARCH.input_dim))


def _clear_of_kinks(params: PolicyParams, obs: np.ndarray) -> bool:
    _, _, _, cache = forward_with_cache(obs, params)
    return all(np.all(np.abs(z) > _KINK_MARGIN) for z in cache.pre_activations.values())


def _draw_network_instance(rng: np.random.Generator):
    for _ in range(_MAX_DRAWS):
        params = _random_params(rng)
        obs = rng.standard_normal((_BATCH, _ARCH.input_dim))
        if _clear_of_kinks(params, obs):
            return params, obs
    raise OracleFailure("could not draw a network instance clear of ReLU kinks")


def _draw_loss_instance(rng: np.random.Generator, cfg: TrainerConfig):
    boundary = 1.0 - cfg.epsilon_aw
    for _ in range(_MAX_DRAWS):
        params, obs = _draw_network_instance(rng)
        mu, log_std, _, _ = forward_with_cache(obs, params)
        gap = np.abs(mu) - boundary
        if np.any(np.abs(gap) < _KINK_MARGIN) or not (np.any(gap > 0) and np.any(gap < 0)):
            continue
        actions = mu + np.exp(log_std) * rng.standard_normal(mu.shape)
        # Ratios placed well inside and well outside the clip range, never near its edges.
        ratios = rng.choice([0.5, 0.95, 1.05, 1.6], size=_BATCH) * rng.uniform(0.99, 1.01, size=_BATCH)
        old_logp = log_prob(actions, mu, log_std) - np.log(ratios)
        advantages = rng.choice([-1.0, 1.0], size=_BATCH) * rng.uniform(0.5, 1.5, size=_BATCH)
        returns = rng.standard_normal(_BATCH)
        return params, Minibatch(obs, actions, old_logp, advantages, returns)
    raise OracleFailure("could not draw a loss instance with active and inactive anti-windup terms")


def _compare(check: str, analytic: Dict[str, np.ndarray], numeric: Dict[str, np.ndarray],
             tolerance: float, inject_fault: Optional[str]) -> List[CheckResult]:
    results = []
    for name, value in analytic.items():
        if name == inject_fault:
            value = value + FAULT_SIZE
        err = relative_error(value, numeric[name])
        results.append(CheckResult(check=check, block=name, error=err, passed=err <= tolerance))
    return results


def check_network(rng: np.random.Generator, tolerance: float = TOLERANCE,
                  inject_fault: Optional[str] = None) -> List[CheckResult]:
    """Reverse pass against central differences of a random linear functional of (mu, log_std, value)."""
    params, obs = _draw_network_instance(rng)
    u_mu = rng.standard_normal((_BATCH, _ARCH.action_dim))
    u_value = rng.standard_normal(_BATCH)
    u_log_std = rng.standard_normal(_ARCH.action_dim)

    def functional(p: PolicyParams) -> float:
        mu, log_std, value, _ = forward_with_cache(obs, p)
        return float(np.sum(u_mu * mu) + np.sum(u_value * value) + np.sum(u_log_std * log_std))

    _, _, _, cache = forward_with_cache(obs, params)
    analytic = backward(cache, u_mu, u_value, params, u_log_std)
    return _compare("network", analytic, numeric_gradient(functional, params), tolerance, inject_fault)


def check_ppo_loss(rng: np.random.Generator, tolerance: float = TOLERANCE,
                   inject_fault: Optional[str] = None) -> List[CheckResult]:
    """Gradient of the full objective (clip, value, entropy and anti-windup terms)."""
    # Only the loss coefficients and the anti-windup switch enter the objective.
    cfg = TrainerConfig(gamma=0.99, lr=1e-3, clip_eps=0.2, c1=0.5, c2=0.01, c3=2.0, epsilon_aw=0.1, d_tar=None,
                        antiwindup_enabled=True, n_envs=1, steps_per_env=_BATCH, minibatch=_BATCH, n_epochs=1,
                        gae_lambda=0.95, max_grad_norm=None, avg_window=1)
    params, minibatch = _draw_loss_instance(rng, cfg)
    _, _, analytic = ppo_loss(minibatch, params, cfg, cfg.c3)
    numeric = numeric_gradient(lambda p: ppo_loss(minibatch, p, cfg, cfg.c3)[0], params)
    return _compare("ppo_loss", analytic, numeric, tolerance, inject_fault)


def check_antiwindup_boundary(epsilon_aw: float = 0.1, tolerance: float = TOLERANCE) -> List[CheckResult]:
    """The penalty derivative is continuous across |mu| = 1 - epsilon_aw on both signs."""
    boundary = 1.0 - epsilon_aw
    step = BOUNDARY_OFFSET / 10.0
    results = []
    for sign, block in ((1.0, "mu>0"), (-1.0, "mu<0")):
        derivs = []
        for offset in (-BOUNDARY_OFFSET, BOUNDARY_OFFSET):
            mu = np.array([[sign * (boundary + offset)]])
            fd = (antiwindup_penalty(mu + step, epsilon_aw) - antiwindup_penalty(mu - step, epsilon_aw)) / (2.0 * step)
            analytic = float(antiwindup_penalty_grad(mu, epsilon_aw)[0, 0])
            derivs.append((fd, analytic))
        jump = max(abs(derivs[1][0] - derivs[0][0]), abs(derivs[1][1] - derivs[0][1]),
                   abs(derivs[0][0] - derivs[0][1]), abs(derivs[1][0] - derivs[1][1]))
        results.append(CheckResult(check="antiwindup_boundary", block=block, error=jump, passed=jump <= tolerance))
    return results


def known_blocks() -> List[str]:
    return list(_ARCH.weight_shapes()) + ["log_std"]


def run_gradcheck(seed: int = 0, tolerance: float = TOLERANCE, inject_fault: Optional[str] = None) -> GradcheckReport:
    """Runs every finite-difference check. `inject_fault` corrupts one analytic block on purpose."""
    if inject_fault is not None and inject_fault not in known_blocks():
        raise ConfigValidationError("--inject-fault", f"unknown block '{inject_fault}' (known: {known_blocks()})")
    rng = np.random.default_rng(seed)
    report = GradcheckReport(seed=seed, tolerance=tolerance)
    report.results.extend(check_network(rng, tolerance, inject_fault))
    report.results.extend(check_ppo_loss(rng, tolerance, inject_fault))
    report.results.extend(check_antiwindup_boundary(tolerance=tolerance))
    logging.info(f"Gradcheck finished: max relative error {report.max_error:.3e}")
    return report


def assert_passed(report: GradcheckReport) -> None:
    failures = report.failures()
    if failures:
        names = ", ".join(f"{r.check}/{r.block} ({r.error:.2e})" for r in failures)
        raise OracleFailure(f"gradient check failed for {names}")


if __name__ == "__main__":
    result = run_gradcheck()
    print(result.format())
