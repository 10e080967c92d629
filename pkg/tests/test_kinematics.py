import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from orthocal.errors import Inconsistent, OutOfReach
from orthocal.geometry import PROTOTYPE, GeometryConfig, ParameterSet, to_absolute, to_relative
from orthocal.kinematics import (constraint_residuals, direct_kinematics, inverse_kinematics,
                                 leg_angles, tcp_from_angles, within_limits)

from conftest import random_params

L = PROTOTYPE.L_mm
S = 60.0 / L
C = math.sqrt(1.0 - S * S)


def test_zero_posture_inverse(nominal):
    sol = inverse_kinematics([0, 0, 0], nominal)
    np.testing.assert_array_equal(sol.rho, [310.25, 310.25, 310.25])
    assert sol.reachable


def test_xmax_posture_point(nominal):
    sol = inverse_kinematics([L * S, 0, 0], nominal)
    np.testing.assert_allclose(sol.rho, [L + L * S, L * C, L * C], atol=1e-9)
    p = direct_kinematics([L + L * S, L * C, L * C], nominal)
    np.testing.assert_allclose(p, [L * S, 0, 0], atol=1e-6)


def test_out_of_reach_names_legs(nominal):
    with pytest.raises(OutOfReach) as err:
        inverse_kinematics([0, 0, L + 1], nominal)
    assert set(err.value.legs) == {"x", "y"}


def test_residual_arithmetic(nominal):
    np.testing.assert_array_equal(constraint_residuals([0, 0, 0], [L, L, L], nominal), 0.0)
    res = constraint_residuals([0, 0, 0], [L + 1, L, L], nominal)
    assert res[0] == pytest.approx(2 * L + 1)
    assert res[0] == pytest.approx(621.5)


def test_nominal_zero_identity(nominal):
    np.testing.assert_array_equal(direct_kinematics([L, L, L], nominal), 0.0)


def _reachable_point(rng, params):
    # points inside a cube well within the workspace keep all radicands positive
    while True:
        p = rng.uniform(-90, 55, 3)
        try:
            sol = inverse_kinematics(p, params)
        except OutOfReach:
            continue
        return p, sol.rho


def test_round_trip_1000_random_poses(rng):
    worst_p = worst_res = 0.0
    for _ in range(1000):
        params = random_params(rng, 5.0)
        p, rho = _reachable_point(rng, params)
        worst_res = max(worst_res, np.max(np.abs(constraint_residuals(p, rho, params))))
        worst_p = max(worst_p, np.max(np.abs(direct_kinematics(rho, params) - p)))
    assert worst_res < 1e-9
    assert worst_p < 1e-6


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-80, 50), min_size=3, max_size=3),
       st.lists(st.floats(-5, 5), min_size=6, max_size=6))
def test_ik_residuals_vanish(p, theta):
    params = ParameterSet.from_theta(theta)
    rho = inverse_kinematics(p, params).rho
    assert np.max(np.abs(constraint_residuals(p, rho, params))) < 1e-9


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-80, 50), min_size=3, max_size=3),
       st.lists(st.floats(-5, 5), min_size=6, max_size=6),
       st.integers(1, 2))
def test_cyclic_symmetry(p, theta, shift):
    params = ParameterSet.from_theta(theta)
    rho = inverse_kinematics(p, params).rho
    p_fk = direct_kinematics(rho, params)
    p_perm = direct_kinematics(np.roll(rho, shift), params.permuted(shift))
    np.testing.assert_allclose(p_perm, np.roll(p_fk, shift), atol=1e-9)


def test_relative_absolute_conversion():
    rel = np.array([-100.0, 0.0, 60.0])
    np.testing.assert_array_equal(to_relative(to_absolute(rel)), rel)
    assert within_limits(to_absolute(rel))
    assert not within_limits(to_absolute([61.0, 0, 0]))


def test_leg_angles_zero(nominal):
    angles = leg_angles([0, 0, 0], [L, L, L], nominal)
    np.testing.assert_allclose(angles.theta, 0.0, atol=1e-15)
    np.testing.assert_allclose(angles.beta, 0.0, atol=1e-15)


def test_leg_angles_xmax_tilt(nominal):
    p = np.array([L * S, 0, 0])
    rho = inverse_kinematics(p, nominal).rho
    angles = leg_angles(p, rho, nominal)
    # the y leg runs from (0, q_y, 0) to p; its angle to the y axis is the posture angle
    tilt = math.acos(math.cos(angles.theta[1]) * math.cos(angles.beta[1]))
    assert tilt == pytest.approx(math.asin(60.0 / L), abs=1e-12)
    # the x leg stays on its axis
    assert angles.theta[0] == pytest.approx(0.0, abs=1e-12)
    assert angles.beta[0] == pytest.approx(0.0, abs=1e-12)


def test_leg_angles_reconstruct_tcp(rng):
    for _ in range(50):
        params = random_params(rng, 3.0)
        p, rho = _reachable_point(rng, params)
        tcps = tcp_from_angles(rho, leg_angles(p, rho, params), params)
        np.testing.assert_allclose(tcps, np.tile(p, (3, 1)), atol=1e-9)


def test_leg_angles_reject_inconsistent_pair(nominal):
    with pytest.raises(Inconsistent):
        leg_angles([0, 0, 0], [L + 1, L, L], nominal)


def test_config_validation():
    with pytest.raises(ValueError):
        GeometryConfig(rho_min_mm=10.0)
    with pytest.raises(ValueError):
        GeometryConfig(L_mm=50.0)
    assert GeometryConfig.from_json(PROTOTYPE.to_json()) == PROTOTYPE
