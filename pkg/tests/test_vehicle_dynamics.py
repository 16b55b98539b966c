#!/usr/bin/env python
# -*- coding: utf-8 -*-
import dataclasses
import math

import numpy as np
import pytest

from src.core.vehicle_dynamics import (ALTITUDE, FLIGHT_PATH_ANGLE, HEATING, VELOCITY, ControlInput, VehicleParams,
                                       VehicleState, aero_forces, alpha_hat, check_path_constraints, clamp_controls,
                                       derivatives, heating, load_vehicle_params, propagate, rk4_step,
                                       specific_energy)
from src.utils.errors import ConfigValidationError, DomainError


# --- Fixtures ---
@pytest.fixture
def nominal():
    return VehicleState.from_degrees(79248.0, 7802.0, gamma_deg=-1.0, psi_deg=90.0)


@pytest.fixture
def mid_altitude():
    """A state deep enough in the atmosphere for lift and drag to matter, actuators settled."""
    return VehicleState.from_degrees(60000.0, 6000.0, theta_deg=3.0, phi_deg=10.0, gamma_deg=-2.0, psi_deg=60.0,
                                     alpha_deg=20.0, sigma_deg=15.0)


def _settled(state):
    return ControlInput(state.alpha, state.sigma)


# --- Vehicle file ---
def test_shipped_vehicle_file_loads(vehicle):
    assert vehicle.m > 0 and vehicle.S > 0
    assert vehicle.q_max == 80.0
    assert vehicle.provenance
    assert vehicle.alpha_cmd_max == pytest.approx(math.radians(45.0))


def test_vehicle_file_rejects_missing_key(tmp_path):
    path = tmp_path / "vehicle.yaml"
    path.write_text("Re: 6371000.0\nm: 1000.0\n")
    with pytest.raises(ConfigValidationError) as err:
        load_vehicle_params(path)
    assert err.value.field.startswith("vehicle.")


def test_vehicle_params_reject_non_finite(vehicle):
    with pytest.raises(ConfigValidationError) as err:
        dataclasses.replace(vehicle, rho0=float("nan"))
    assert err.value.field == "vehicle.rho0"


def test_vehicle_params_require_nonzero_lift_slope(vehicle):
    with pytest.raises(ConfigValidationError):
        dataclasses.replace(vehicle, a1=0.0)


def test_missing_vehicle_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_vehicle_params(tmp_path / "nope.yaml")


# --- Aerodynamics and heating ---
def test_aero_at_zero_alpha(vehicle, nominal):
    aero = aero_forces(nominal.replace(alpha=0.0), vehicle)
    assert aero.CL == vehicle.a0
    assert aero.CD == vehicle.b0


def test_density_at_sea_level(vehicle, nominal):
    aero = aero_forces(nominal.replace(h=0.0), vehicle)
    assert aero.rho == vehicle.rho0
    assert aero.g == pytest.approx(vehicle.mu / vehicle.Re ** 2)


def test_lift_and_drag_scale_with_v_squared(vehicle, mid_altitude):
    base = aero_forces(mid_altitude, vehicle)
    doubled = aero_forces(mid_altitude.replace(v=2.0 * mid_altitude.v), vehicle)
    assert doubled.L == pytest.approx(4.0 * base.L, rel=1e-14)
    assert doubled.D == pytest.approx(4.0 * base.D, rel=1e-14)


def test_heating_unit_factors(vehicle):
    params = dataclasses.replace(vehicle, hc0=1.0, hc1=0.0, hc2=0.0, hc3=0.0)
    state = VehicleState(0.0, 1.0 / 3.28084e-4, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    assert heating(state, 1.0, params) == pytest.approx(779.67, rel=1e-12)


def test_heating_power_law(vehicle, mid_altitude):
    rho = aero_forces(mid_altitude, vehicle).rho
    q1 = heating(mid_altitude, rho, vehicle)
    q2 = heating(mid_altitude.replace(v=2.0 * mid_altitude.v), rho, vehicle)
    assert q2 / q1 == pytest.approx(2.0 ** 3.07, rel=1e-12)


def test_alpha_hat_is_degrees():
    assert alpha_hat(math.pi / 4) == pytest.approx(45.0)


# --- Equations of motion ---
def test_level_flight_has_no_climb_rate(vehicle, nominal):
    rates = derivatives(nominal.replace(gamma=0.0), ControlInput(0.0, 0.0), vehicle)
    assert rates[0] == 0.0


def test_actuators_at_rest_when_settled(vehicle, mid_altitude):
    rates = derivatives(mid_altitude, _settled(mid_altitude), vehicle)
    assert rates[6] == 0.0
    assert rates[7] == 0.0


def test_derivatives_match_hand_evaluation(vehicle, nominal):
    p = vehicle
    state = nominal.replace(alpha=math.radians(12.0), sigma=math.radians(30.0))
    control = ControlInput.from_degrees(20.0, 40.0)
    h, v, th, ph, ga, ps, al, si = state.as_array()

    a_deg = al * 180.0 / math.pi
    rho = p.rho0 * math.exp(-h / p.H0)
    g = p.mu / (h + p.Re) ** 2
    L = 0.5 * (p.a0 + p.a1 * a_deg) * p.S * rho * v ** 2
    D = 0.5 * (p.b0 + p.b1 * a_deg + p.b2 * a_deg ** 2) * p.S * rho * v ** 2
    r = h + p.Re
    expected = np.array([
        v * math.sin(ga),
        -D / p.m - g * math.sin(ga),
        v * math.cos(ga) * math.sin(ps) / (r * math.cos(ph)),
        v * math.cos(ga) * math.cos(ps) / r,
        L * math.cos(si) / (p.m * v) + (v / r - g / v) * math.cos(ga),
        L * math.sin(si) / (p.m * v * math.cos(ga)) + v * math.cos(ga) * math.sin(ps) * math.tan(ph) / r,
        (control.alpha_cmd - al) / p.tau_alpha,
        (control.sigma_cmd - si) / p.tau_sigma,
    ])
    got = derivatives(state, control, vehicle)
    np.testing.assert_allclose(got, expected, rtol=1e-12, atol=1e-15)


def test_derivatives_are_pure(vehicle, mid_altitude):
    control = ControlInput.from_degrees(25.0, -10.0)
    first = derivatives(mid_altitude, control, vehicle)
    second = derivatives(mid_altitude, control, vehicle)
    assert np.array_equal(first, second)


def test_polar_singularity_is_domain_error(vehicle, nominal):
    with pytest.raises(DomainError):
        derivatives(nominal.replace(phi=math.pi / 2), ControlInput(0.0, 0.0), vehicle)


def test_zero_speed_is_domain_error(vehicle, nominal):
    with pytest.raises(DomainError):
        derivatives(nominal.replace(v=0.0), ControlInput(0.0, 0.0), vehicle)


# --- Integration ---
def test_rk4_rejects_non_positive_dt(vehicle, nominal):
    with pytest.raises(DomainError):
        rk4_step(nominal, ControlInput(0.0, 0.0), 0.0, vehicle)


def test_tiny_step_returns_input(vehicle, mid_altitude):
    nxt = rk4_step(mid_altitude, _settled(mid_altitude), 1e-12, vehicle)
    np.testing.assert_allclose(nxt.as_array(), mid_altitude.as_array(), rtol=1e-10, atol=1e-12)


def test_drag_free_energy_conservation(vehicle, nominal):
    params = dataclasses.replace(vehicle, b0=0.0, b1=0.0, b2=0.0)
    start = nominal.replace(alpha=math.radians(15.0))
    states = propagate(start, ControlInput(start.alpha, 0.0), 2.0, 50, params)
    e0 = specific_energy(states[0], params)
    drift = max(abs(specific_energy(s, params) - e0) for s in states)
    assert drift / abs(e0) < 1e-6


def test_rk4_is_fourth_order(vehicle):
    # Dense enough air that the trajectory bends within a few seconds.
    start = VehicleState.from_degrees(45000.0, 4000.0, phi_deg=5.0, gamma_deg=-6.0, psi_deg=45.0,
                                      alpha_deg=30.0, sigma_deg=15.0)
    control = _settled(start)
    horizon = 20.0

    def final_state(dt):
        return propagate(start, control, dt, int(round(horizon / dt)), vehicle)[-1].as_array()

    scales = np.array([1e5, 1e4, 1.0, 1.0, 0.35, math.pi, 0.8, 1.6])
    reference = final_state(1.0 / 64.0)
    err_coarse = np.max(np.abs(final_state(2.0) - reference) / scales)
    err_fine = np.max(np.abs(final_state(1.0) - reference) / scales)
    order = math.log2(err_coarse / err_fine)
    assert 3.5 <= order <= 4.5


def test_actuator_lag_time_constant(vehicle, mid_altitude):
    start = mid_altitude.replace(alpha=0.0)
    command = ControlInput(math.radians(20.0), mid_altitude.sigma)
    states = propagate(start, command, 0.05, 100, vehicle)
    gaps = [abs(s.alpha - command.alpha_cmd) for s in states]
    assert all(b <= a for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] < math.exp(-5.0) * gaps[0] * 1.01


def test_propagate_returns_all_states(vehicle, mid_altitude):
    states = propagate(mid_altitude, _settled(mid_altitude), 2.0, 3, vehicle)
    assert len(states) == 4
    assert states[0] == mid_altitude


# --- Limits ---
@pytest.mark.parametrize("raw_deg, expected_deg", [
    ((50.0, 0.0), (45.0, 0.0)),
    ((0.0, -95.0), (0.0, -89.0)),
    ((10.0, 20.0), (10.0, 20.0)),
])
def test_clamp_controls(vehicle, raw_deg, expected_deg):
    clamped = clamp_controls(ControlInput.from_degrees(*raw_deg), vehicle)
    assert math.degrees(clamped.alpha_cmd) == pytest.approx(expected_deg[0])
    assert math.degrees(clamped.sigma_cmd) == pytest.approx(expected_deg[1])


def test_clamp_is_idempotent(vehicle):
    rng = np.random.default_rng(3)
    for a, s in rng.uniform(-3.0, 3.0, size=(200, 2)):
        once = clamp_controls(ControlInput(a, s), vehicle)
        assert clamp_controls(once, vehicle) == once
        assert abs(once.alpha_cmd) <= vehicle.alpha_cmd_max
        assert abs(once.sigma_cmd) <= vehicle.sigma_cmd_max


def test_constraint_boundaries_are_feasible(vehicle):
    state = VehicleState(20000.0, 600.0, 0.0, 0.0, vehicle.gamma_abs_max, 0.0, 0.0, 0.0)
    assert check_path_constraints(state, 80.0, vehicle).ok


@pytest.mark.parametrize("changes, q, violated", [
    ({"h": 19999.9}, 10.0, ALTITUDE),
    ({"v": 599.0}, 10.0, VELOCITY),
    ({"gamma": math.radians(-20.5)}, 10.0, FLIGHT_PATH_ANGLE),
    ({}, 80.01, HEATING),
])
def test_constraint_violations(vehicle, changes, q, violated):
    state = VehicleState(30000.0, 2000.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0).replace(**changes)
    verdict = check_path_constraints(state, q, vehicle)
    assert not verdict.ok
    assert verdict.violated == violated


def test_from_dict_converts_integers():
    data = {"Re": 6371000, "m": 1000, "S": 10, "rho0": 1, "H0": 7000, "mu": 3.986e14, "a0": 0, "a1": 0.03,
            "b0": 0.05, "b1": 0, "b2": 0.001, "hc0": 1, "hc1": 0, "hc2": 0, "hc3": 0}
    params = VehicleParams.from_dict(data)
    assert isinstance(params.m, float)
    assert params.tau_alpha == 1.0
