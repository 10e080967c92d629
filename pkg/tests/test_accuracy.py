import math

import numpy as np
import pytest

from orthocal.accuracy import (NoiseModel, analytic_covariance, correlated_noise_matrix,
                               monte_carlo_covariance, trial_seed)
from orthocal.geometry import PROTOTYPE, ParameterSet
from orthocal.identification import build_system, calibration_matrix, solve_linear
from orthocal.measurement import CANONICAL_INDEX, CANONICAL_ORDER, simulate_readings

A = calibration_matrix()
G = np.array([[2, 0, 1, 0], [0, 2, 0, 1], [1, 0, 2, 0], [0, 1, 0, 2]], dtype=float)


def _shares_zero_reading(r, c):
    # Max and Min deviations of the same gauge reuse its Zero reading
    lr, dr, _ = CANONICAL_ORDER[r]
    lc, dc, _ = CANONICAL_ORDER[c]
    return (lr, dr) == (lc, dc)


def test_noise_matrix_structure():
    E = correlated_noise_matrix(NoiseModel(1.0))
    for r in range(12):
        for c in range(12):
            if r == c:
                assert E[r, c] == 2.0
            elif _shares_zero_reading(r, c):
                assert E[r, c] == 1.0
            else:
                assert E[r, c] == 0.0
    # canonical order groups it into three printed 4x4 blocks
    np.testing.assert_array_equal(E, np.kron(np.eye(3), G))


def test_noise_matrix_scaling():
    E = correlated_noise_matrix(NoiseModel(0.01))
    assert E[0, 0] == pytest.approx(2e-4)
    assert E[0, 2] == pytest.approx(1e-4)
    np.testing.assert_allclose(correlated_noise_matrix(NoiseModel(0.01, 4)), E / 4)


def test_noise_matrix_matches_simulation():
    sigma = 0.01
    Y = np.array([simulate_readings(None, sigma=sigma, seed=s).vector() for s in range(100_000)])
    emp = Y.T @ Y / len(Y)
    E = correlated_noise_matrix(NoiseModel(sigma))
    mask = E != 0
    np.testing.assert_allclose(emp[mask], E[mask], rtol=0.03)
    assert np.max(np.abs(emp[~mask])) < 0.03 * 2 * sigma**2


def test_noise_model_validation():
    with pytest.raises(ValueError):
        NoiseModel(-1.0)
    with pytest.raises(ValueError):
        NoiseModel(0.01, 0)


def test_zero_sigma_zero_covariance():
    report = analytic_covariance(A, NoiseModel(0.0))
    np.testing.assert_array_equal(report.covariance, 0.0)
    mc = monte_carlo_covariance(None, PROTOTYPE, NoiseModel(0.0), 100, 0)
    # only rounding of the noise-free readings remains
    np.testing.assert_allclose(mc.covariance, 0.0, atol=1e-24)


def test_quadratic_scaling():
    v1 = analytic_covariance(A, NoiseModel(0.01)).covariance
    v2 = analytic_covariance(A, NoiseModel(0.02)).covariance
    np.testing.assert_allclose(v2, 4 * v1, rtol=1e-12)


def test_sandwich_matches_direct_propagation():
    E = correlated_noise_matrix(NoiseModel(0.01))
    P = np.linalg.pinv(A)
    np.testing.assert_allclose(analytic_covariance(A, NoiseModel(0.01)).covariance, P @ E @ P.T,
                               rtol=1e-9, atol=1e-15)


def test_report_properties():
    report = analytic_covariance(build_system_zero(), NoiseModel(0.01))
    V = report.covariance
    np.testing.assert_allclose(V, V.T)
    assert np.all(np.linalg.eigvalsh(V) >= -1e-15)
    np.testing.assert_allclose(report.std_devs, np.sqrt(np.diag(V)))
    np.testing.assert_allclose(np.diag(report.correlation), 1.0)
    # offsets and lengths of one leg are nearly indistinguishable
    assert report.correlation[0, 3] > 0.99


def build_system_zero():
    from orthocal.measurement import MeasurementSet
    return build_system(MeasurementSet.from_vector(np.zeros(12)))


def test_correlation_changes_std_devs():
    report = analytic_covariance(A, NoiseModel(0.01))
    ratio = report.std_devs / report.std_devs_uncorrelated
    assert np.all(np.abs(ratio - 1) > 0.05)


def test_cyclic_invariance():
    V = analytic_covariance(A, NoiseModel(0.01)).covariance
    perm = np.roll(np.eye(3), 1, axis=0)
    P6 = np.kron(np.eye(2), perm)
    np.testing.assert_allclose(P6 @ V @ P6.T, V, atol=1e-15)


def test_reduced_subsets():
    for subset in ("rho", "L"):
        report = analytic_covariance(A, NoiseModel(0.01), subset)
        assert report.covariance.shape == (3, 3)
        assert np.all(report.std_devs < 0.05)


def test_trial_seeds_reproduce_simulation():
    params = ParameterSet.from_deltas(drho=(0.5, -0.2, 0.1))
    noise = NoiseModel(0.01)
    mc = monte_carlo_covariance(params, PROTOTYPE, noise, 100, seed=11)
    errs = []
    for k in range(100):
        ms = simulate_readings(params, sigma=0.01, seed=trial_seed(11, k))
        errs.append(solve_linear(build_system(ms)).theta - params.theta())
    errs = np.array(errs)
    np.testing.assert_allclose(mc.covariance, errs.T @ errs / 100, rtol=1e-9)
    assert mc.n_trials == 100 and mc.to_json()["centre"] == "true parameters"


def test_monte_carlo_is_deterministic():
    a = monte_carlo_covariance(None, PROTOTYPE, NoiseModel(0.01), 200, seed=5)
    b = monte_carlo_covariance(None, PROTOTYPE, NoiseModel(0.01), 200, seed=5)
    assert a.covariance.tobytes() == b.covariance.tobytes()


def test_monte_carlo_within_three_standard_errors():
    n = 10_000
    noise = NoiseModel(0.01)
    V = analytic_covariance(A, noise).covariance
    mc = monte_carlo_covariance(None, PROTOTYPE, noise, n, seed=0).covariance
    # variance of a product of zero-mean Gaussians: V_aa V_bb + V_ab^2
    se = np.sqrt((np.outer(np.diag(V), np.diag(V)) + V**2) / n)
    assert np.all(np.abs(mc - V) < 3 * se)


def test_repeats_shrink_by_sqrt3():
    one = monte_carlo_covariance(None, PROTOTYPE, NoiseModel(0.01, 1), 2000, seed=1).std_devs
    three = monte_carlo_covariance(None, PROTOTYPE, NoiseModel(0.01, 3), 2000, seed=1).std_devs
    np.testing.assert_allclose(one / three, math.sqrt(3), rtol=0.1)


def test_minimum_trials():
    with pytest.raises(ValueError):
        monte_carlo_covariance(None, PROTOTYPE, NoiseModel(0.01), 99)
