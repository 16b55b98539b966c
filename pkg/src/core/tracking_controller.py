#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""Bank-to-turn dynamic-inversion tracking controller.

Turns desired flight-path and heading rates into (alpha_cmd, sigma_cmd):
the velocity-frame acceleration that realizes the rates is converted into the
required aerodynamic force, the lift vector is banked onto that force and the
lift magnitude is inverted analytically for the angle of attack.
"""
import math
from dataclasses import dataclass, replace
from typing import Tuple

from src.core.vehicle_dynamics import (ControlInput, VehicleParams, VehicleState, aero_forces, clamp_controls,
                                       derivatives)
from src.utils.errors import DomainError

_COS_PHI_MIN = 1e-9
_V_MIN = 1e-6


@dataclass(frozen=True)
class DesiredRates:
    gamma_dot_des: float
    psi_dot_des: float


@dataclass(frozen=True)
class AeroForceCommand:
    """Velocity-frame force demand. f1 (drag axis) is diagnostic only."""
    f1: float
    f2: float
    f3: float
    L_cmd: float
    sigma_cmd_raw: float = math.nan
    alpha_cmd_raw: float = math.nan
    saturated: bool = False


@dataclass(frozen=True)
class TrackingCommand:
    control: ControlInput
    force: AeroForceCommand


def accel_command(state: VehicleState, rates: DesiredRates, params: VehicleParams) -> Tuple[float, float]:
    """Velocity-frame acceleration components (a2, a3) realizing the desired rates."""
    cos_phi = math.cos(state.phi)
    if abs(cos_phi) < _COS_PHI_MIN:
        raise DomainError(f"polar singularity: phi={state.phi!r}")
    if not state.v >= _V_MIN:
        raise DomainError(f"speed too small: v={state.v!r}")
    h, v, Re = state.h, state.v, params.Re
    cos_g = math.cos(state.gamma)
    gd, pd = rates.gamma_dot_des, rates.psi_dot_des
    a2 = (v * cos_g * (h * pd * cos_phi + Re * pd * cos_phi - v * cos_g * math.sin(state.phi) * math.sin(state.psi))
          / (cos_phi * (Re + h)))
    a3 = -v * (Re * gd + gd * h - v * cos_g) / (Re + h)
    return a2, a3


def required_aero_force(a2: float, a3: float, state: VehicleState, params: VehicleParams) -> AeroForceCommand:
    """Newton's second law in the velocity frame with gravity g_V = [-g sin(gamma), 0, g cos(gamma)]."""
    aero = aero_forces(state, params)
    f2 = params.m * a2
    f3 = params.m * (a3 - aero.g * math.cos(state.gamma))
    # The drag axis is not commanded; f1 reports the force the current attitude produces.
    f1 = -aero.D
    return AeroForceCommand(f1=f1, f2=f2, f3=f3, L_cmd=math.hypot(f2, f3))


def bank_and_alpha(cmd: AeroForceCommand, state: VehicleState,
                   params: VehicleParams) -> Tuple[ControlInput, AeroForceCommand]:
    """Bank angle lining the lift up with the demanded force, and the alpha producing its magnitude.

    Returns:
        The clamped control and `cmd` with raw commands and the saturation flag filled in.
    """
    if not state.v >= _V_MIN:
        raise DomainError(f"speed too small: v={state.v!r}")
    rho = params.rho0 * math.exp(-state.h / params.H0)
    if not rho > 0:
        raise DomainError(f"non-positive density at h={state.h!r}")
    sigma_raw = math.atan2(cmd.f2, -cmd.f3)
    cl_required = 2.0 * cmd.L_cmd / (params.S * rho * state.v * state.v)
    alpha_raw = math.radians((cl_required - params.a0) / params.a1)
    raw = ControlInput(alpha_raw, sigma_raw)
    control = clamp_controls(raw, params)
    saturated = control != raw
    return control, replace(cmd, sigma_cmd_raw=sigma_raw, alpha_cmd_raw=alpha_raw, saturated=saturated)


def control_from_desired_dynamics(state: VehicleState, rates: DesiredRates, params: VehicleParams) -> TrackingCommand:
    a2, a3 = accel_command(state, rates, params)
    force = required_aero_force(a2, a3, state, params)
    control, force = bank_and_alpha(force, state, params)
    return TrackingCommand(control=control, force=force)


def achieved_rates(state: VehicleState, control: ControlInput, params: VehicleParams) -> DesiredRates:
    """gamma and psi rates of the dynamics with the actuators sitting at the commands."""
    settled = state.replace(alpha=control.alpha_cmd, sigma=control.sigma_cmd)
    rates = derivatives(settled, control, params)
    return DesiredRates(float(rates[4]), float(rates[5]))
