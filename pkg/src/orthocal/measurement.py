"""Dial-gauge measurement model for leg-parallelism calibration.

For every leg two gauges are placed at the middle of the leg while the
machine sits at Zero.  The leg is then driven to its Max and Min postures
and the transverse gauge readings are differenced against the Zero values.
Twelve deviations result: 3 legs x 2 transverse directions x 2 postures.

Deviations are keyed by ``(leg, direction, sign)`` with axis indices and
``sign`` in ``{"+", "-"}``; ``(1, 0, "+")`` is the x-direction deviation of
the y-leg at YMax.
"""

from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .differential import posture_jacobian
from .errors import GaugeMiss, IncompleteSet, NoRealSolution, OutOfReach, SingularJoint, Unreachable
from .geometry import AXES, PROTOTYPE, GeometryConfig, ParameterSet, Posture, axis_index
from .kinematics import direct_kinematics, inverse_kinematics

SIGNS = ("+", "-")
GAUGE_RESOLUTION_MM = 0.01

__all__ = [
    "CANONICAL_ORDER", "AGGREGATED_ORDER", "Measurement", "MeasurementSet", "AggregatedDeviations",
    "GaugeStation", "LegLine", "commanded_joints", "gauge_stations", "gauge_points_linear",
    "leg_line", "gauge_mu_first_order", "raw_readings", "difference_operator",
    "predict_deviations_exact", "predict_deviations_linear", "simulate_readings",
    "load_measurements", "save_measurements", "label",
]


def _canonical_order():
    # blocks pair the legs (x,y), (y,z), (x,z); inside a block the '+' pair
    # precedes the '-' pair and the i-direction reading of leg j comes first
    order = []
    for i, j in ((0, 1), (1, 2), (0, 2)):
        for sign in SIGNS:
            order.append((j, i, sign))
            order.append((i, j, sign))
    return tuple(order)


CANONICAL_ORDER = _canonical_order()
CANONICAL_INDEX = {key: n for n, key in enumerate(CANONICAL_ORDER)}

# (leg, direction) pairs of the aggregated deviations d_dir_leg = d+ - d-,
# sorted by direction then leg: dx_y, dx_z, dy_x, dy_z, dz_x, dz_y
AGGREGATED_ORDER = tuple((leg, d) for d in range(3) for leg in range(3) if leg != d)


def label(key) -> str:
    """Readable label such as ``dx_y+``."""
    if len(key) == 3:
        leg, direction, sign = key
        return f"d{AXES[direction]}_{AXES[leg]}{sign}"
    leg, direction = key
    return f"d{AXES[direction]}_{AXES[leg]}"


def _transverse(leg: int) -> tuple[int, int]:
    return tuple(a for a in range(3) if a != leg)


def _slot(leg: int, direction: int) -> int:
    return _transverse(leg).index(direction)


@dataclass(frozen=True)
class Measurement:
    leg: int
    direction: int
    sign: str
    value: float

    def __post_init__(self):
        leg, direction = axis_index(self.leg), axis_index(self.direction)
        if leg == direction:
            raise ValueError(f"measurement direction must differ from the leg ({AXES[leg]})")
        if self.sign not in SIGNS:
            raise ValueError(f"sign must be '+' or '-', got {self.sign!r}")
        value = float(self.value)
        if not math.isfinite(value):
            raise ValueError(f"measurement value must be finite, got {self.value!r}")
        object.__setattr__(self, "leg", leg)
        object.__setattr__(self, "direction", direction)
        object.__setattr__(self, "value", value)

    @property
    def key(self):
        return (self.leg, self.direction, self.sign)

    def to_json(self) -> dict:
        return {"leg": AXES[self.leg], "dir": AXES[self.direction], "sign": self.sign,
                "value_mm": self.value}


@dataclass(frozen=True)
class MeasurementSet:
    """Twelve labelled gauge deviations plus where they came from.

    Entries keep the order they were given in; :meth:`vector` always
    returns the canonical calibration order.
    """

    entries: tuple
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        entries = tuple(self.entries)
        for e in entries:
            if not isinstance(e, Measurement):
                raise TypeError(f"entries must be Measurement instances, got {type(e).__name__}")
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "provenance", dict(self.provenance))

    def missing(self):
        seen = {e.key for e in self.entries}
        return [k for k in CANONICAL_ORDER if k not in seen]

    def duplicates(self):
        seen, dup = set(), []
        for e in self.entries:
            if e.key in seen and e.key not in dup:
                dup.append(e.key)
            seen.add(e.key)
        return dup

    def validate(self) -> "MeasurementSet":
        missing, dup = self.missing(), self.duplicates()
        if missing or dup:
            raise IncompleteSet(missing, dup)
        return self

    def value(self, leg, direction, sign) -> float:
        key = (axis_index(leg), axis_index(direction), sign)
        for e in self.entries:
            if e.key == key:
                return e.value
        raise KeyError(label(key))

    def vector(self) -> np.ndarray:
        """Values in canonical order (validates completeness)."""
        self.validate()
        out = np.empty(12)
        for e in self.entries:
            out[CANONICAL_INDEX[e.key]] = e.value
        return out

    @classmethod
    def from_vector(cls, values, provenance: dict | None = None) -> "MeasurementSet":
        values = np.asarray(values, dtype=float).reshape(-1)
        if values.shape != (12,):
            raise ValueError(f"expected 12 deviations, got {values.shape}")
        entries = tuple(Measurement(leg, d, s, float(v))
                        for (leg, d, s), v in zip(CANONICAL_ORDER, values))
        return cls(entries, provenance or {})

    def aggregated(self) -> "AggregatedDeviations":
        """Max-minus-Min differences per (leg, direction)."""
        vals = [self.value(leg, d, "+") - self.value(leg, d, "-") for leg, d in AGGREGATED_ORDER]
        return AggregatedDeviations(np.array(vals), dict(self.provenance))

    def to_json(self) -> dict:
        return {"provenance": self.provenance, "entries": [e.to_json() for e in self.entries]}

    @classmethod
    def from_json(cls, obj: dict) -> "MeasurementSet":
        if not isinstance(obj, dict) or not isinstance(obj.get("entries"), list):
            raise ValueError("measurement set must be an object with an 'entries' list")
        entries = []
        for n, item in enumerate(obj["entries"]):
            try:
                entries.append(Measurement(item["leg"], item["dir"], item["sign"],
                                           _json_number(item["value_mm"])))
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"bad measurement entry #{n}: {exc}") from None
        return cls(tuple(entries), obj.get("provenance", {}))


@dataclass(frozen=True)
class AggregatedDeviations:
    """Six Max-minus-Min deviations ``d_dir_leg = d_dir_leg+ - d_dir_leg-``.

    Values follow :data:`AGGREGATED_ORDER`.  Some data sets only report
    these differences, not the twelve raw deviations.
    """

    values: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(-1)
        if v.shape != (6,) or not np.all(np.isfinite(v)):
            raise ValueError(f"expected 6 finite aggregated deviations, got {self.values!r}")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "provenance", dict(self.provenance))

    def vector(self) -> np.ndarray:
        return np.array(self.values)

    def aggregated(self) -> "AggregatedDeviations":
        return self

    @property
    def rms(self) -> float:
        return float(np.sqrt(np.mean(self.values ** 2)))

    def to_json(self) -> dict:
        return {
            "kind": "aggregated",
            "provenance": self.provenance,
            "entries": [{"leg": AXES[leg], "dir": AXES[d], "value_mm": float(v)}
                        for (leg, d), v in zip(AGGREGATED_ORDER, self.values)],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "AggregatedDeviations":
        by_key = {}
        for n, item in enumerate(obj.get("entries", [])):
            try:
                key = (axis_index(item["leg"]), axis_index(item["dir"]))
                by_key[key] = _json_number(item["value_mm"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"bad aggregated entry #{n}: {exc}") from None
        missing = [k for k in AGGREGATED_ORDER if k not in by_key]
        if missing:
            raise ValueError("aggregated set lacks " + ", ".join(label(k) for k in missing))
        return cls(np.array([by_key[k] for k in AGGREGATED_ORDER]), obj.get("provenance", {}))


def _json_number(v):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValueError(f"expected a number, got {v!r}")
    return float(v)


def load_measurements(path) -> MeasurementSet | AggregatedDeviations:
    """Read a measurement file (twelve deviations or six aggregated ones)."""
    obj = json.loads(Path(path).read_text())
    if isinstance(obj, dict) and obj.get("kind") == "aggregated":
        return AggregatedDeviations.from_json(obj)
    return MeasurementSet.from_json(obj)


def save_measurements(data, path) -> None:
    Path(path).write_text(json.dumps(data.to_json(), indent=2) + "\n")


# --- machine model -------------------------------------------------------


class GaugeStation(NamedTuple):
    leg: int
    axial_coordinate: float
    zero_readings: np.ndarray


class LegLine(NamedTuple):
    """Leg bar from the prismatic joint centre to the TCP."""

    joint_center: np.ndarray
    tcp: np.ndarray

    def point(self, mu: float) -> np.ndarray:
        return mu * self.tcp + (1.0 - mu) * self.joint_center

    def mu_at(self, axis: int, coordinate: float) -> float:
        """Line parameter where the given coordinate along ``axis`` is reached."""
        denom = self.joint_center[axis] - self.tcp[axis]
        if denom == 0.0:
            return math.nan
        return (self.joint_center[axis] - coordinate) / denom


def _mode(config, mode):
    return config.posture_command_mode if mode is None else mode


def commanded_joints(posture: Posture, config: GeometryConfig = PROTOTYPE,
                     controller: ParameterSet | None = None, mode: str | None = None) -> np.ndarray:
    """Encoder values the controller sends the machine to for ``posture``.

    The controller only knows ``controller`` (nominal geometry unless
    calibration results were installed).  In ``cartesian_nominal_ik`` mode
    it solves its inverse model for the target ``limit * e_i``; in
    ``direct_joint`` mode it drives only the leg's own actuator to the limit.
    """
    if controller is None:
        controller = ParameterSet.nominal(config)
    mode = _mode(config, mode)
    target = np.zeros(3)
    if posture.kind != "zero":
        target[posture.axis] = posture.limit(config)
    if mode == "cartesian_nominal_ik":
        try:
            return inverse_kinematics(target, controller, config=config).rho
        except OutOfReach as exc:
            raise Unreachable(posture, str(exc)) from None
    return config.L_mm + target - controller.joint_offsets


def _actual_pose(posture, params, config, controller, mode):
    rho = commanded_joints(posture, config, controller, mode)
    try:
        p = direct_kinematics(rho, params)
    except (NoRealSolution, SingularJoint) as exc:
        raise Unreachable(posture, str(exc)) from None
    return rho, p


def leg_line(posture: Posture, leg, params: ParameterSet | None = None,
             config: GeometryConfig = PROTOTYPE, controller: ParameterSet | None = None,
             mode: str | None = None) -> LegLine:
    """Where the leg actually is when the controller commands ``posture``."""
    if params is None:
        params = ParameterSet.nominal(config)
    i = axis_index(leg)
    rho, p = _actual_pose(posture, params, config, controller, mode)
    r = np.zeros(3)
    r[i] = rho[i] + params.joint_offsets[i]
    return LegLine(r, p)


def gauge_stations(params: ParameterSet | None = None, config: GeometryConfig = PROTOTYPE,
                   controller: ParameterSet | None = None, mode: str | None = None):
    """Gauge locations fixed at the middle of each leg in the Zero posture."""
    if params is None:
        params = ParameterSet.nominal(config)
    stations = []
    for i in range(3):
        line = leg_line(Posture.zero(), i, params, config, controller, mode)
        mid = line.point(0.5)
        stations.append(GaugeStation(i, float(mid[i]), mid[list(_transverse(i))]))
    return tuple(stations)


def gauge_points_linear(params: ParameterSet, config: GeometryConfig = PROTOTYPE) -> np.ndarray:
    """First-order gauge points at Zero; row ``i`` is the station of leg ``i``."""
    drho = params.joint_offsets
    dL = params.leg_length_errors(config)
    g = np.tile((drho - dL) / 2.0, (3, 1))
    for i in range(3):
        g[i, i] = (config.L_mm - dL[i]) / 2.0 + drho[i]
    return g


def gauge_mu_first_order(posture: Posture, params: ParameterSet,
                         config: GeometryConfig = PROTOTYPE) -> float:
    """Line parameter of the gauge station at a Max/Min posture, to first order."""
    S = math.sin(posture.alpha(config))
    dL = params.leg_length_errors(config)[posture.axis]
    return 0.5 + S - S * dL / config.L_mm


def raw_readings(params: ParameterSet | None = None, config: GeometryConfig = PROTOTYPE,
                 controller: ParameterSet | None = None, mode: str | None = None) -> np.ndarray:
    """Transverse gauge readings, shape (3 legs, 3 postures, 2 directions).

    Postures are ordered Zero, Max, Min along the leg's own axis; the two
    directions are the leg's transverse axes in ascending order.
    """
    if params is None:
        params = ParameterSet.nominal(config)
    stations = gauge_stations(params, config, controller, mode)
    out = np.empty((3, 3, 2))
    for i, station in enumerate(stations):
        out[i, 0] = station.zero_readings
        for n, posture in ((1, Posture.max(i)), (2, Posture.min(i))):
            line = leg_line(posture, i, params, config, controller, mode)
            mu = line.mu_at(i, station.axial_coordinate)
            if not 0.0 <= mu <= 1.0:
                raise GaugeMiss(AXES[i], str(posture), mu)
            out[i, n] = line.point(mu)[list(_transverse(i))]
    return out


def difference_operator() -> np.ndarray:
    """12x18 matrix mapping flattened raw readings to canonical deviations."""
    D = np.zeros((12, 18))
    for row, (leg, direction, sign) in enumerate(CANONICAL_ORDER):
        slot = _slot(leg, direction)
        posture = 1 if sign == "+" else 2
        D[row, leg * 6 + posture * 2 + slot] = 1.0
        D[row, leg * 6 + slot] = -1.0
    return D


def _deviations_from_raw(raw: np.ndarray) -> np.ndarray:
    out = np.empty(raw.shape[:-3] + (12,))
    for row, (leg, direction, sign) in enumerate(CANONICAL_ORDER):
        slot = _slot(leg, direction)
        posture = 1 if sign == "+" else 2
        out[..., row] = raw[..., leg, posture, slot] - raw[..., leg, 0, slot]
    return out


def predict_deviations_exact(params: ParameterSet | None = None, config: GeometryConfig = PROTOTYPE,
                             controller: ParameterSet | None = None,
                             mode: str | None = None) -> MeasurementSet:
    """Noise-free deviations from the full nonlinear machine and gauge model."""
    raw = raw_readings(params, config, controller, mode)
    return MeasurementSet.from_vector(_deviations_from_raw(raw), {"source": "exact_model"})


def predict_deviations_linear(params: ParameterSet | None = None,
                              config: GeometryConfig = PROTOTYPE) -> MeasurementSet:
    """First-order deviations.

    The Max/Min reading of leg ``i`` along ``j`` is ``mu * p_j`` with
    ``mu ~ 0.5 + sin(alpha)``, ``p_j`` from the posture Jacobian, and the
    Zero reading is the transverse coordinate of the first-order gauge point.
    """
    if params is None:
        params = ParameterSet.nominal(config)
    theta = params.theta(config)
    g0 = gauge_points_linear(params, config)
    values = np.empty(12)
    for row, (leg, direction, sign) in enumerate(CANONICAL_ORDER):
        posture = Posture.max(leg) if sign == "+" else Posture.min(leg)
        dp = posture_jacobian(posture, config).J @ theta
        mu0 = 0.5 + math.sin(posture.alpha(config))
        values[row] = mu0 * dp[direction] - g0[leg, direction]
    return MeasurementSet.from_vector(values, {"source": "linear_model"})


@functools.lru_cache(maxsize=64)
def _raw_readings_frozen(params, config, controller, mode):
    raw = raw_readings(params, config, controller, mode)
    raw.flags.writeable = False
    return raw


def _cached_raw_readings(params, config, controller, mode):
    # repeated simulations of one machine share its noise-free readings
    if params is None:
        params = ParameterSet.nominal(config)
    return _raw_readings_frozen(params, config, controller, mode)


def _noisy_deviations(raw: np.ndarray, sigma: float, repeats: int, rng: np.random.Generator,
                      quantization: float | None = None) -> np.ndarray:
    draws = raw + rng.normal(0.0, sigma, size=(repeats,) + raw.shape)
    if quantization:
        draws = np.round(draws / quantization) * quantization
    return _deviations_from_raw(draws.mean(axis=0))


def simulate_readings(params: ParameterSet | None = None, config: GeometryConfig = PROTOTYPE,
                      sigma: float = 0.0, seed: int = 0, repeats: int = 1,
                      quantization: float | None = None, controller: ParameterSet | None = None,
                      mode: str | None = None) -> MeasurementSet:
    """Simulated gauge experiment with Gaussian reading noise.

    Noise of standard deviation ``sigma`` is added to every raw reading
    (each averaged over ``repeats`` draws) before differencing, so the Zero
    reading shared by the Max and Min deviations of one gauge correlates
    them.  ``quantization`` rounds each individual reading to that
    resolution (e.g. :data:`GAUGE_RESOLUTION_MM`).
    """
    if not (sigma >= 0.0 and math.isfinite(sigma)):
        raise ValueError(f"sigma must be a non-negative number, got {sigma!r}")
    if int(repeats) != repeats or repeats < 1:
        raise ValueError(f"repeats must be a positive integer, got {repeats!r}")
    raw = _cached_raw_readings(params, config, controller, mode)
    provenance = {"source": "simulated", "seed": int(seed), "sigma_mm": float(sigma),
                  "repeats": int(repeats)}
    if quantization:
        provenance["quantization_mm"] = float(quantization)
    if sigma == 0.0 and not quantization:
        values = _deviations_from_raw(raw)
    else:
        rng = np.random.default_rng(seed)
        values = _noisy_deviations(raw, sigma, int(repeats), rng, quantization)
    return MeasurementSet.from_vector(values, provenance)

