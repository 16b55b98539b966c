#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""Shuttle reentry point-mass dynamics over a spherical, non-rotating Earth.

State x = [h, v, theta, phi, gamma, psi, alpha, sigma] in SI units and radians.
Aerodynamic and heating polynomials take the angle of attack in degrees.
Nothing in this module keeps state; every function is safe to call from any thread.
"""
import dataclasses
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import numpy as np

from src.utils.errors import ConfigValidationError, DomainError

# Configure logging
logging.basicConfig(level=logging.INFO, format="%(asctime)s - %(levelname)s - Dynamics - %(message)s")

STATE_FIELDS = ("h", "v", "theta", "phi", "gamma", "psi", "alpha", "sigma")

HEATING_GAIN = 779.67
HEATING_SPEED_FACTOR = 3.28084e-4
HEATING_EXPONENT = 3.07

# Violated-constraint identifiers
ALTITUDE = "altitude"
VELOCITY = "velocity"
FLIGHT_PATH_ANGLE = "flight-path angle"
HEATING = "heating"

_COS_PHI_MIN = 1e-9
_V_MIN = 1e-6


# --- Domain Types ---
@dataclass(frozen=True)
class VehicleState:
    h: float
    v: float
    theta: float
    phi: float
    gamma: float
    psi: float
    alpha: float
    sigma: float

    def as_array(self) -> np.ndarray:
        return np.array([self.h, self.v, self.theta, self.phi, self.gamma, self.psi, self.alpha, self.sigma],
                        dtype=np.float64)

    @classmethod
    def from_array(cls, values) -> "VehicleState":
        h, v, theta, phi, gamma, psi, alpha, sigma = (float(x) for x in values)
        return cls(h, v, theta, phi, gamma, psi, alpha, sigma)

    @classmethod
    def from_degrees(cls, h: float, v: float, theta_deg: float = 0.0, phi_deg: float = 0.0, gamma_deg: float = 0.0,
                     psi_deg: float = 0.0, alpha_deg: float = 0.0, sigma_deg: float = 0.0) -> "VehicleState":
        return cls(float(h), float(v), math.radians(theta_deg), math.radians(phi_deg), math.radians(gamma_deg),
                   math.radians(psi_deg), math.radians(alpha_deg), math.radians(sigma_deg))

    def replace(self, **changes) -> "VehicleState":
        return dataclasses.replace(self, **changes)

    def is_finite(self) -> bool:
        return all(math.isfinite(getattr(self, name)) for name in STATE_FIELDS)


@dataclass(frozen=True)
class ControlInput:
    alpha_cmd: float
    sigma_cmd: float

    @classmethod
    def from_degrees(cls, alpha_cmd_deg: float, sigma_cmd_deg: float) -> "ControlInput":
        return cls(math.radians(alpha_cmd_deg), math.radians(sigma_cmd_deg))


@dataclass(frozen=True)
class VehicleParams:
    """Physical, aerodynamic and constraint constants of the vehicle (SI units)."""
    Re: float
    m: float
    S: float
    rho0: float
    H0: float
    mu: float
    a0: float
    a1: float
    b0: float
    b1: float
    b2: float
    hc0: float
    hc1: float
    hc2: float
    hc3: float
    tau_alpha: float = 1.0
    tau_sigma: float = 1.0
    q_max: float = 80.0
    h_min: float = 20000.0
    v_min: float = 600.0
    gamma_abs_max_deg: float = 20.0
    alpha_cmd_max_deg: float = 45.0
    sigma_cmd_max_deg: float = 89.0
    provenance: str = ""
    version: int = 1

    def __post_init__(self):
        for f in dataclasses.fields(self):
            if f.name in ("provenance", "version"):
                continue
            value = getattr(self, f.name)
            if not isinstance(value, (int, float)) or isinstance(value, bool) or not math.isfinite(value):
                raise ConfigValidationError(f"vehicle.{f.name}", f"must be a finite number, got {value!r}")
        for name in ("Re", "m", "S", "rho0", "H0", "mu", "tau_alpha", "tau_sigma", "q_max",
                     "gamma_abs_max_deg", "alpha_cmd_max_deg", "sigma_cmd_max_deg"):
            if getattr(self, name) <= 0:
                raise ConfigValidationError(f"vehicle.{name}", "must be strictly positive")
        if self.a1 == 0:
            raise ConfigValidationError("vehicle.a1", "must be non-zero for the analytic lift inversion")

    @property
    def gamma_abs_max(self) -> float:
        return math.radians(self.gamma_abs_max_deg)

    @property
    def alpha_cmd_max(self) -> float:
        return math.radians(self.alpha_cmd_max_deg)

    @property
    def sigma_cmd_max(self) -> float:
        return math.radians(self.sigma_cmd_max_deg)

    @classmethod
    def from_dict(cls, data: dict) -> "VehicleParams":
        names = [f.name for f in dataclasses.fields(cls)]
        required = [f.name for f in dataclasses.fields(cls)
                    if f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING]
        missing = [name for name in required if name not in data]
        if missing:
            raise ConfigValidationError(f"vehicle.{missing[0]}", f"missing required key (missing: {missing})")
        kwargs = {name: data[name] for name in names if name in data}
        for name, value in kwargs.items():
            if name in ("provenance",):
                kwargs[name] = str(value).strip()
            elif name == "version":
                kwargs[name] = int(value)
            elif isinstance(value, (int, float)) and not isinstance(value, bool):
                kwargs[name] = float(value)
        return cls(**kwargs)


@dataclass(frozen=True)
class AeroOutputs:
    L: float
    D: float
    rho: float
    g: float
    CL: float
    CD: float
    q: float


@dataclass(frozen=True)
class ConstraintVerdict:
    ok: bool
    violated: Optional[str] = None


def load_vehicle_params(path: Path) -> VehicleParams:
    """Reads the vehicle YAML file. Missing keys and non-finite values are rejected."""
    # Local import: storage_manager depends on the network module, not on this one.
    from src.core.storage_manager import read_yaml

    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Vehicle config not found: {path}")
    params = VehicleParams.from_dict(read_yaml(path))
    logging.info(f"Loaded vehicle constants from {path} (version {params.version})")
    return params


# --- Aerodynamics ---
def alpha_hat(alpha: float) -> float:
    """Angle of attack in degrees, the argument of every aero/heating polynomial."""
    return alpha * (180.0 / math.pi)


def heating(state: VehicleState, rho: float, params: VehicleParams) -> float:
    """Leading-edge heating rate q in BTU/ft^2-s."""
    a = alpha_hat(state.alpha)
    poly = params.hc0 + a * (params.hc1 + a * (params.hc2 + a * params.hc3))
    return HEATING_GAIN * poly * math.sqrt(max(rho, 0.0)) * (HEATING_SPEED_FACTOR * max(state.v, 0.0)) ** HEATING_EXPONENT


def aero_forces(state: VehicleState, params: VehicleParams) -> AeroOutputs:
    a = alpha_hat(state.alpha)
    CL = params.a0 + params.a1 * a
    CD = params.b0 + params.b1 * a + params.b2 * a * a
    rho = params.rho0 * math.exp(-state.h / params.H0)
    g = params.mu / (state.h + params.Re) ** 2
    qbar_s = 0.5 * params.S * rho * state.v * state.v
    return AeroOutputs(L=CL * qbar_s, D=CD * qbar_s, rho=rho, g=g, CL=CL, CD=CD, q=heating(state, rho, params))


# --- Equations of motion ---
def derivatives(state: VehicleState, control: ControlInput, params: VehicleParams) -> np.ndarray:
    """Time derivative [h', v', theta', phi', gamma', psi', alpha', sigma'] of the state.

    Raises:
        DomainError: At the polar singularity (|cos phi| < 1e-9) or for v < 1e-6.
    """
    h, v = state.h, state.v
    cos_phi = math.cos(state.phi)
    if abs(cos_phi) < _COS_PHI_MIN:
        raise DomainError(f"polar singularity: phi={state.phi!r}")
    if not v >= _V_MIN:
        raise DomainError(f"speed too small: v={v!r}")

    a = alpha_hat(state.alpha)
    CL = params.a0 + params.a1 * a
    CD = params.b0 + params.b1 * a + params.b2 * a * a
    rho = params.rho0 * math.exp(-h / params.H0)
    r = h + params.Re
    g = params.mu / (r * r)
    qbar_s = 0.5 * params.S * rho * v * v
    L = CL * qbar_s
    D = CD * qbar_s

    sin_g, cos_g = math.sin(state.gamma), math.cos(state.gamma)
    sin_psi, cos_psi = math.sin(state.psi), math.cos(state.psi)
    sin_phi = math.sin(state.phi)
    v_over_r = v / r

    return np.array([
        v * sin_g,
        -D / params.m - g * sin_g,
        v_over_r * cos_g * sin_psi / cos_phi,
        v_over_r * cos_g * cos_psi,
        L * math.cos(state.sigma) / (params.m * v) + (v_over_r - g / v) * cos_g,
        L * math.sin(state.sigma) / (params.m * v * cos_g) + v_over_r * cos_g * sin_psi * sin_phi / cos_phi,
        (control.alpha_cmd - state.alpha) / params.tau_alpha,
        (control.sigma_cmd - state.sigma) / params.tau_sigma,
    ], dtype=np.float64)


def rk4_step(state: VehicleState, control: ControlInput, dt: float, params: VehicleParams) -> VehicleState:
    """One classical RK4 step with the control held constant over the step.

    Raises:
        DomainError: dt <= 0, a derivative domain error, or a non-finite result.
    """
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt!r}")
    x = state.as_array()
    k1 = derivatives(state, control, params)
    k2 = derivatives(VehicleState.from_array(x + 0.5 * dt * k1), control, params)
    k3 = derivatives(VehicleState.from_array(x + 0.5 * dt * k2), control, params)
    k4 = derivatives(VehicleState.from_array(x + dt * k3), control, params)
    x_next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(x_next)):
        raise DomainError(f"non-finite state after RK4 step from {state}")
    return VehicleState.from_array(x_next)


def propagate(state: VehicleState, control: ControlInput, dt: float, n_steps: int,
              params: VehicleParams) -> List[VehicleState]:
    """Repeated rk4_step under a constant control; returns [x0, x1, ..., x_n]."""
    states = [state]
    for _ in range(int(n_steps)):
        states.append(rk4_step(states[-1], control, dt, params))
    return states


def specific_energy(state: VehicleState, params: VehicleParams) -> float:
    """Specific mechanical energy v^2/2 - mu/(h+Re)."""
    return 0.5 * state.v * state.v - params.mu / (state.h + params.Re)


# --- Limits ---
def clamp_controls(raw: ControlInput, params: VehicleParams) -> ControlInput:
    a_max = params.alpha_cmd_max
    s_max = params.sigma_cmd_max
    return ControlInput(
        alpha_cmd=min(max(raw.alpha_cmd, -a_max), a_max),
        sigma_cmd=min(max(raw.sigma_cmd, -s_max), s_max),
    )


def check_path_constraints(state: VehicleState, q: float, params: VehicleParams) -> ConstraintVerdict:
    """Path constraints are non-strict: boundary values are feasible."""
    if not state.h >= params.h_min:
        return ConstraintVerdict(False, ALTITUDE)
    if not state.v >= params.v_min:
        return ConstraintVerdict(False, VELOCITY)
    if not abs(state.gamma) <= params.gamma_abs_max:
        return ConstraintVerdict(False, FLIGHT_PATH_ANGLE)
    if not q <= params.q_max:
        return ConstraintVerdict(False, HEATING)
    return ConstraintVerdict(True)


if __name__ == "__main__":
    from src.utils.resource_path import get_resource_path

    vehicle = load_vehicle_params(get_resource_path("config/vehicle_shuttle.yaml"))
    x0 = VehicleState.from_degrees(79248.0, 7802.0, gamma_deg=-1.0, psi_deg=90.0)
    aero = aero_forces(x0, vehicle)
    print(f"Nominal start: L={aero.L:.1f} N, D={aero.D:.1f} N, q={aero.q:.2f} BTU/ft^2-s")
    print("Derivatives:", derivatives(x0, ControlInput(0.0, 0.0), vehicle))
