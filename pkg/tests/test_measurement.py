import json
import math
from importlib import resources

import numpy as np
import pytest

from orthocal.errors import IncompleteSet
from orthocal.geometry import PROTOTYPE, ParameterSet, Posture, all_postures
from orthocal.identification import calibration_matrix
from orthocal.measurement import (CANONICAL_INDEX, CANONICAL_ORDER, AggregatedDeviations, Measurement,
                                  MeasurementSet, gauge_mu_first_order, gauge_points_linear,
                                  gauge_stations, leg_line, load_measurements, predict_deviations_exact,
                                  predict_deviations_linear, raw_readings, save_measurements,
                                  simulate_readings)

from conftest import random_params

L = PROTOTYPE.L_mm
S1 = 60.0 / L
ALPHA1 = math.asin(S1)
# independent evaluation of the printed coefficient formulas
B1 = (0.5 + math.sin(ALPHA1)) * math.tan(ALPHA1)
C1 = (0.5 + math.sin(ALPHA1)) / math.cos(ALPHA1) - 0.5


def idx(leg, direction, sign):
    a = "xyz"
    return CANONICAL_INDEX[(a.index(leg), a.index(direction), sign)]


def test_canonical_order():
    labels = [f"d{'xyz'[d]}_{'xyz'[leg]}{s}" for leg, d, s in CANONICAL_ORDER]
    assert labels == ["dx_y+", "dy_x+", "dx_y-", "dy_x-", "dy_z+", "dz_y+", "dy_z-", "dz_y-",
                      "dx_z+", "dz_x+", "dx_z-", "dz_x-"]


def test_station_nominal(nominal):
    st = gauge_stations(nominal)
    assert st[0].axial_coordinate == pytest.approx(155.125, abs=1e-12)
    np.testing.assert_allclose(st[0].zero_readings, 0.0, atol=1e-12)


def test_station_offset_shift():
    params = ParameterSet.from_deltas(drho=(1, 0, 0))
    g = gauge_points_linear(params)
    assert g[0, 0] == pytest.approx(L / 2 + 1)
    assert g[1, 0] == pytest.approx(0.5)
    exact = gauge_stations(params)
    assert exact[0].axial_coordinate == pytest.approx(L / 2 + 1, abs=1e-3)
    assert exact[1].zero_readings[0] == pytest.approx(0.5, abs=1e-3)


def test_station_length_shift():
    params = ParameterSet.from_deltas(dL=(2, 0, 0))
    assert gauge_points_linear(params)[0, 0] == pytest.approx(154.125)
    assert gauge_stations(params)[0].axial_coordinate == pytest.approx(154.125, abs=1e-3)


def test_leg_lines_nominal(nominal):
    line = leg_line(Posture.zero(), "x", nominal)
    np.testing.assert_allclose(line.joint_center, [L, 0, 0], atol=1e-12)
    np.testing.assert_allclose(line.tcp, 0.0, atol=1e-12)
    line = leg_line(Posture.max("x"), "x", nominal)
    np.testing.assert_allclose(line.joint_center, [L + L * S1, 0, 0], atol=1e-9)
    np.testing.assert_allclose(line.tcp, [L * S1, 0, 0], atol=1e-9)


def test_gauge_parameter_is_first_order():
    params = ParameterSet.from_deltas(dL=(1, 0, 0))
    station = gauge_stations(params)[0]
    line = leg_line(Posture.max("x"), "x", params)
    mu_exact = line.mu_at(0, station.axial_coordinate)
    mu_printed = 0.5 + S1 - S1 * 1.0 / L
    assert gauge_mu_first_order(Posture.max("x"), params) == pytest.approx(mu_printed)
    assert abs(mu_exact - mu_printed) < (1.0 / L) ** 2


def test_nominal_legs_stay_parallel(nominal):
    np.testing.assert_allclose(raw_readings(nominal), 0.0, atol=1e-12)
    # legs not driven by the posture axis still stay in their reference plane
    for posture in all_postures():
        for leg in range(3):
            line = leg_line(posture, leg, nominal)
            for k in range(3):
                if k != leg and (posture.kind == "zero" or k != posture.axis):
                    assert abs(line.joint_center[k]) < 1e-9 and abs(line.tcp[k]) < 1e-9


def test_linear_examples():
    y = predict_deviations_linear(ParameterSet.from_deltas(drho=(1, 0, 0))).vector()
    assert y[idx("x", "y", "+")] == pytest.approx(B1, abs=1e-12)
    assert y[idx("x", "y", "+")] == pytest.approx(0.1367, abs=1e-4)
    y = predict_deviations_linear(ParameterSet.from_deltas(dL=(0, 1, 0))).vector()
    assert y[idx("x", "y", "+")] == pytest.approx(-C1, abs=1e-12)
    assert y[idx("x", "y", "+")] == pytest.approx(-0.2067, abs=1e-4)
    assert y[idx("x", "z", "+")] == 0.0


def test_zero_parameters_give_zero_deviations(nominal):
    assert np.all(predict_deviations_linear(nominal).vector() == 0.0)
    # Min postures pass through a square root in the controller, hence not bit-exact
    np.testing.assert_allclose(predict_deviations_exact(nominal).vector(), 0.0, atol=1e-12)


def test_exact_close_to_linear_for_unit_offset():
    y = predict_deviations_exact(ParameterSet.from_deltas(drho=(1, 0, 0))).vector()
    assert abs(y[idx("x", "y", "+")] - 0.1367) < 0.01


def test_linearization_order(rng):
    A = calibration_matrix()
    for _ in range(5):
        theta = rng.uniform(-3, 3, 6)
        errs = []
        for eps in (1e-1, 1e-2, 1e-3):
            exact = predict_deviations_exact(ParameterSet.from_theta(eps * theta)).vector()
            errs.append(np.linalg.norm(exact - eps * A @ theta))
        orders = np.diff(-np.log10(errs))
        assert np.all(orders >= 1.9), orders


def test_noise_free_simulation_is_exact(rng):
    params = random_params(rng, 2.0)
    a = simulate_readings(params, sigma=0.0, seed=1).vector()
    b = simulate_readings(params, sigma=0.0, seed=99).vector()
    c = predict_deviations_exact(params).vector()
    assert a.tobytes() == b.tobytes() == c.tobytes()


def test_same_seed_same_noise():
    a = simulate_readings(None, sigma=0.01, seed=7).vector()
    b = simulate_readings(None, sigma=0.01, seed=7).vector()
    assert a.tobytes() == b.tobytes()


def _sample(n, sigma, repeats=1):
    return np.array([simulate_readings(None, sigma=sigma, seed=s, repeats=repeats).vector()
                     for s in range(n)])


def test_simulated_noise_structure():
    sigma = 0.01
    Y = _sample(10_000, sigma)
    cov = Y.T @ Y / len(Y)
    np.testing.assert_allclose(np.diag(cov), 2 * sigma**2, rtol=0.05)
    for leg, d, sign in CANONICAL_ORDER:
        if sign == "+":
            c = cov[CANONICAL_INDEX[(leg, d, "+")], CANONICAL_INDEX[(leg, d, "-")]]
            assert c == pytest.approx(sigma**2, rel=0.1)


def test_repeats_shrink_variance():
    v1 = _sample(3000, 0.01, 1).var(axis=0).mean()
    v3 = _sample(3000, 0.01, 3).var(axis=0).mean()
    assert v1 / v3 == pytest.approx(3.0, rel=0.1)


def test_quantized_readings_are_on_grid_differences():
    ms = simulate_readings(None, sigma=0.01, seed=3, quantization=0.01)
    v = ms.vector() / 0.01
    np.testing.assert_allclose(v, np.round(v), atol=1e-9)
    assert ms.provenance["quantization_mm"] == 0.01


def test_installed_parameters_cancel_deviations(rng):
    params = random_params(rng, 3.0)
    y = predict_deviations_exact(params, controller=params).vector()
    np.testing.assert_allclose(y, 0.0, atol=1e-9)


def test_direct_joint_mode_moves_one_actuator(nominal):
    # driving one actuator alone moves the TCP off the calibration axis
    y = predict_deviations_exact(nominal, mode="direct_joint").vector()
    assert np.all(np.isfinite(y)) and np.max(np.abs(y)) > 1.0


def test_incomplete_set_is_rejected():
    ms = MeasurementSet.from_vector(np.zeros(12))
    short = MeasurementSet(ms.entries[:-1])
    with pytest.raises(IncompleteSet) as err:
        short.vector()
    assert "dz_x-" in str(err.value)
    dup = MeasurementSet(ms.entries[:-1] + (ms.entries[0],))
    with pytest.raises(IncompleteSet):
        dup.validate()


def test_measurement_rejects_bad_labels():
    with pytest.raises(ValueError):
        Measurement("x", "x", "+", 0.0)
    with pytest.raises(ValueError):
        Measurement("x", "y", "0", 0.0)


@pytest.mark.parametrize("name", ["experiment1.json", "experiment2.json", "experiment3.json"])
def test_bundled_files_round_trip(name, tmp_path):
    src = resources.files("orthocal") / "data" / name
    text = src.read_text()
    data = load_measurements(src)
    out = tmp_path / name
    save_measurements(data, out)
    assert out.read_text() == text
    again = load_measurements(out)
    np.testing.assert_array_equal(again.vector(), data.vector())


def test_aggregated_from_twelve():
    ms = load_measurements(resources.files("orthocal") / "data" / "experiment2.json")
    agg = ms.aggregated()
    assert isinstance(agg, AggregatedDeviations)
    np.testing.assert_allclose(agg.vector(), [-0.41, -0.37, 0.42, -0.18, -1.14, -0.69], atol=1e-12)
    assert json.loads(json.dumps(agg.to_json()))["kind"] == "aggregated"
