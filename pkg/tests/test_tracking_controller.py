#!/usr/bin/env python
# -*- coding: utf-8 -*-
import math

import numpy as np
import pytest

from src.core.tracking_controller import (AeroForceCommand, DesiredRates, accel_command, achieved_rates,
                                          bank_and_alpha, control_from_desired_dynamics, required_aero_force)
from src.core.vehicle_dynamics import VehicleState, aero_forces
from src.utils.errors import DomainError


@pytest.fixture
def state():
    return VehicleState.from_degrees(50000.0, 5000.0, theta_deg=4.0, phi_deg=20.0, gamma_deg=-3.0, psi_deg=70.0,
                                     alpha_deg=25.0, sigma_deg=10.0)


def _random_feasible_state(rng):
    return VehicleState.from_degrees(
        h=rng.uniform(30000.0, 70000.0), v=rng.uniform(2000.0, 7500.0),
        theta_deg=rng.uniform(-30.0, 30.0), phi_deg=rng.uniform(-60.0, 60.0),
        gamma_deg=rng.uniform(-10.0, 10.0), psi_deg=rng.uniform(-180.0, 180.0),
    )


# --- accel_command ---
def test_a3_vanishes_at_orbital_rate(vehicle, state):
    gd = state.v * math.cos(state.gamma) / (vehicle.Re + state.h)
    _, a3 = accel_command(state, DesiredRates(gd, 0.0), vehicle)
    assert a3 == pytest.approx(0.0, abs=1e-9)


def test_a2_vanishes_without_turn(vehicle, state):
    a2, _ = accel_command(state.replace(psi=0.0), DesiredRates(0.001, 0.0), vehicle)
    assert a2 == 0.0


def test_accel_matches_printed_expression(vehicle):
    rng = np.random.default_rng(11)
    Re = vehicle.Re
    for _ in range(50):
        s = _random_feasible_state(rng)
        gd, pd = rng.uniform(-0.01, 0.01, size=2)
        a2, a3 = accel_command(s, DesiredRates(gd, pd), vehicle)
        cg, cp = math.cos(s.gamma), math.cos(s.phi)
        exp_a2 = s.v * cg * (s.h * pd * cp + Re * pd * cp - s.v * cg * math.sin(s.phi) * math.sin(s.psi)) / (cp * (Re + s.h))
        exp_a3 = -s.v * (Re * gd + gd * s.h - s.v * cg) / (Re + s.h)
        assert a2 == pytest.approx(exp_a2, rel=1e-12, abs=1e-12)
        assert a3 == pytest.approx(exp_a3, rel=1e-12, abs=1e-12)


def test_accel_polar_singularity(vehicle, state):
    with pytest.raises(DomainError):
        accel_command(state.replace(phi=math.pi / 2), DesiredRates(0.0, 0.0), vehicle)


# --- required_aero_force ---
def test_gravity_only_balance(vehicle, state):
    cmd = required_aero_force(0.0, 0.0, state, vehicle)
    g = aero_forces(state, vehicle).g
    assert cmd.f2 == 0.0
    assert cmd.f3 == pytest.approx(-vehicle.m * g * math.cos(state.gamma), rel=1e-14)
    assert cmd.L_cmd == pytest.approx(vehicle.m * g * abs(math.cos(state.gamma)), rel=1e-14)


def test_force_sign_symmetry(vehicle, state):
    plus = required_aero_force(3.0, -2.0, state, vehicle)
    minus = required_aero_force(-3.0, -2.0, state, vehicle)
    assert minus.f2 == -plus.f2
    assert minus.L_cmd == plus.L_cmd


def test_force_matches_formula(vehicle):
    rng = np.random.default_rng(5)
    for _ in range(50):
        s = _random_feasible_state(rng)
        a2, a3 = rng.uniform(-20.0, 20.0, size=2)
        cmd = required_aero_force(a2, a3, s, vehicle)
        g = vehicle.mu / (s.h + vehicle.Re) ** 2
        f3 = vehicle.m * (a3 - g * math.cos(s.gamma))
        assert cmd.f2 == pytest.approx(vehicle.m * a2, rel=1e-12)
        assert cmd.f3 == pytest.approx(f3, rel=1e-12)
        assert cmd.L_cmd == pytest.approx(math.sqrt((vehicle.m * a2) ** 2 + f3 ** 2), rel=1e-12)


# --- bank_and_alpha ---
def test_zero_side_force_gives_zero_bank(vehicle, state):
    control, cmd = bank_and_alpha(AeroForceCommand(f1=0.0, f2=0.0, f3=-5e5, L_cmd=5e5), state, vehicle)
    assert control.sigma_cmd == 0.0
    assert cmd.sigma_cmd_raw == 0.0


def test_bank_is_odd_in_side_force(vehicle, state):
    _, left = bank_and_alpha(AeroForceCommand(0.0, 2e5, -5e5, math.hypot(2e5, 5e5)), state, vehicle)
    _, right = bank_and_alpha(AeroForceCommand(0.0, -2e5, -5e5, math.hypot(2e5, 5e5)), state, vehicle)
    assert right.sigma_cmd_raw == -left.sigma_cmd_raw


def test_excess_lift_demand_saturates(vehicle, state):
    huge = 1e12
    control, cmd = bank_and_alpha(AeroForceCommand(0.0, 0.0, -huge, huge), state, vehicle)
    assert cmd.saturated
    assert control.alpha_cmd == pytest.approx(vehicle.alpha_cmd_max)


# --- Full inversion ---
def test_composition_matches_stepwise(vehicle, state):
    rates = DesiredRates(math.radians(0.1), math.radians(-0.2))
    a2, a3 = accel_command(state, rates, vehicle)
    control, force = bank_and_alpha(required_aero_force(a2, a3, state, vehicle), state, vehicle)
    command = control_from_desired_dynamics(state, rates, vehicle)
    assert command.control == control
    assert command.force == force


def test_round_trip_single(vehicle, state):
    rates = DesiredRates(math.radians(0.05), math.radians(0.1))
    command = control_from_desired_dynamics(state, rates, vehicle)
    assert not command.force.saturated
    achieved = achieved_rates(state, command.control, vehicle)
    assert achieved.gamma_dot_des == pytest.approx(rates.gamma_dot_des, abs=1e-6)
    assert achieved.psi_dot_des == pytest.approx(rates.psi_dot_des, abs=1e-6)


def test_round_trip_at_scale(vehicle):
    rng = np.random.default_rng(2024)
    checked = 0
    for _ in range(1000):
        s = _random_feasible_state(rng)
        rates = DesiredRates(*np.radians(rng.uniform(-0.2, 0.2, size=2)))
        command = control_from_desired_dynamics(s, rates, vehicle)
        if command.force.saturated:
            continue
        achieved = achieved_rates(s, command.control, vehicle)
        assert abs(achieved.gamma_dot_des - rates.gamma_dot_des) <= 1e-6
        assert abs(achieved.psi_dot_des - rates.psi_dot_des) <= 1e-6
        checked += 1
    assert checked >= 100
