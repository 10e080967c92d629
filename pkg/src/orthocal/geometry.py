"""Nominal geometry, calibration parameters and posture labels.

All lengths are in millimetres and all angles in radians.  Joint
coordinates are absolute model coordinates: at the nominal mechanical zero
every prismatic joint reads ``L``.  The controller works in relative
coordinates (zero at the mechanical zero); use :func:`to_relative` and
:func:`to_absolute` to move between the two.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

AXES = ("x", "y", "z")
AXIS_INDEX = {name: i for i, name in enumerate(AXES)}

POSTURE_COMMAND_MODES = ("cartesian_nominal_ik", "direct_joint")


def axis_index(axis) -> int:
    """Return 0, 1 or 2 for an axis given by name or index."""
    if isinstance(axis, str):
        try:
            return AXIS_INDEX[axis.lower()]
        except KeyError:
            raise ValueError(f"unknown axis {axis!r}; expected one of {AXES}") from None
    i = int(axis)
    if i not in (0, 1, 2):
        raise ValueError(f"axis index must be 0, 1 or 2, got {axis!r}")
    return i


def complementary(i: int) -> tuple[int, int]:
    """The two axes other than ``i``, in cyclic order (j = i+1, k = i+2)."""
    return (i + 1) % 3, (i + 2) % 3


def _frozen_vector(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float).reshape(-1)
    if arr.shape != (3,):
        raise ValueError(f"{name} must have 3 components, got shape {np.shape(values)}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite, got {arr}")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class GeometryConfig:
    """Nominal leg geometry and software joint limits of the machine.

    ``r_mm`` and ``d_mm`` are carried for reporting only; the simplified
    PSS model eliminates the tool offset and ignores the parallelogram width.
    """

    L_mm: float = 310.25
    r_mm: float = 31.0
    d_mm: float = 80.0
    rho_min_mm: float = -100.0
    rho_max_mm: float = 60.0
    posture_command_mode: str = "cartesian_nominal_ik"

    def __post_init__(self):
        for name in ("L_mm", "r_mm", "d_mm", "rho_min_mm", "rho_max_mm"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ValueError(f"{name} must be a finite number, got {value!r}")
        if self.L_mm <= 0:
            raise ValueError(f"L_mm must be positive, got {self.L_mm}")
        if not self.rho_min_mm < 0 < self.rho_max_mm:
            raise ValueError(
                f"joint limits must straddle zero, got [{self.rho_min_mm}, {self.rho_max_mm}]")
        if abs(self.rho_min_mm) >= self.L_mm or abs(self.rho_max_mm) >= self.L_mm:
            raise ValueError("joint limits must be smaller than the leg length in magnitude")
        if self.posture_command_mode not in POSTURE_COMMAND_MODES:
            raise ValueError(
                f"posture_command_mode must be one of {POSTURE_COMMAND_MODES}, "
                f"got {self.posture_command_mode!r}")

    @property
    def alpha_max(self) -> float:
        """Leg inclination at the Max postures, asin(rho_max / L)."""
        return math.asin(self.rho_max_mm / self.L_mm)

    @property
    def alpha_min(self) -> float:
        """Leg inclination at the Min postures, asin(rho_min / L) (negative)."""
        return math.asin(self.rho_min_mm / self.L_mm)

    def absolute_limits(self) -> tuple[float, float]:
        return self.L_mm + self.rho_min_mm, self.L_mm + self.rho_max_mm

    def to_json(self) -> dict:
        out = {
            "L_mm": self.L_mm,
            "r_mm": self.r_mm,
            "d_mm": self.d_mm,
            "rho_min_mm": self.rho_min_mm,
            "rho_max_mm": self.rho_max_mm,
        }
        if self.posture_command_mode != "cartesian_nominal_ik":
            out["posture_command_mode"] = self.posture_command_mode
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "GeometryConfig":
        if not isinstance(obj, dict):
            raise ValueError("geometry config must be a JSON object")
        known = {"L_mm", "r_mm", "d_mm", "rho_min_mm", "rho_max_mm", "posture_command_mode"}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown geometry config field(s): {', '.join(sorted(unknown))}")
        kwargs = {}
        for key, value in obj.items():
            kwargs[key] = value if key == "posture_command_mode" else _number(value, key)
        return cls(**kwargs)


PROTOTYPE = GeometryConfig()


def _number(value, name):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValueError(f"{name} must be a number, got {value!r}")
    return float(value)


@dataclass(frozen=True)
class ParameterSet:
    """Joint offsets and absolute leg lengths of one machine.

    The six calibration unknowns are the offsets and the leg length errors
    ``L_i - L``; :meth:`theta` returns them as one vector in the column
    order (drho_x, drho_y, drho_z, dL_x, dL_y, dL_z).
    """

    joint_offsets: np.ndarray = field(default_factory=lambda: np.zeros(3))
    leg_lengths: np.ndarray = field(default_factory=lambda: np.full(3, PROTOTYPE.L_mm))

    def __post_init__(self):
        offsets = _frozen_vector(self.joint_offsets, "joint_offsets")
        lengths = _frozen_vector(self.leg_lengths, "leg_lengths")
        if np.any(lengths <= 0):
            raise ValueError(f"leg lengths must be positive, got {lengths}")
        object.__setattr__(self, "joint_offsets", offsets)
        object.__setattr__(self, "leg_lengths", lengths)

    @classmethod
    def nominal(cls, config: GeometryConfig = PROTOTYPE) -> "ParameterSet":
        return cls(np.zeros(3), np.full(3, config.L_mm))

    @classmethod
    def from_deltas(cls, drho=(0.0, 0.0, 0.0), dL=(0.0, 0.0, 0.0),
                    config: GeometryConfig = PROTOTYPE) -> "ParameterSet":
        return cls(np.asarray(drho, dtype=float), config.L_mm + np.asarray(dL, dtype=float))

    @classmethod
    def from_theta(cls, theta, config: GeometryConfig = PROTOTYPE) -> "ParameterSet":
        theta = np.asarray(theta, dtype=float).reshape(-1)
        if theta.shape != (6,):
            raise ValueError(f"theta must have 6 components, got {theta.shape}")
        return cls.from_deltas(theta[:3], theta[3:], config)

    def leg_length_errors(self, config: GeometryConfig = PROTOTYPE) -> np.ndarray:
        return self.leg_lengths - config.L_mm

    def theta(self, config: GeometryConfig = PROTOTYPE) -> np.ndarray:
        return np.concatenate([self.joint_offsets, self.leg_length_errors(config)])

    def permuted(self, shift: int = 1) -> "ParameterSet":
        """Relabel axes cyclically (x->y->z->x for ``shift=1``)."""
        return ParameterSet(np.roll(self.joint_offsets, shift), np.roll(self.leg_lengths, shift))

    def to_json(self, config: GeometryConfig = PROTOTYPE) -> dict:
        return {
            "drho_mm": [float(v) for v in self.joint_offsets],
            "dL_mm": [float(v) for v in self.leg_length_errors(config)],
        }

    @classmethod
    def from_json(cls, obj: dict, config: GeometryConfig = PROTOTYPE) -> "ParameterSet":
        if not isinstance(obj, dict):
            raise ValueError("parameter set must be a JSON object")
        drho = obj.get("drho_mm", [0.0, 0.0, 0.0])
        dL = obj.get("dL_mm", [0.0, 0.0, 0.0])
        for name, vec in (("drho_mm", drho), ("dL_mm", dL)):
            if not isinstance(vec, list) or len(vec) != 3:
                raise ValueError(f"{name} must be a list of 3 numbers")
            for v in vec:
                _number(v, name)
        return cls.from_deltas(drho, dL, config)

    def __eq__(self, other):
        if not isinstance(other, ParameterSet):
            return NotImplemented
        return (np.array_equal(self.joint_offsets, other.joint_offsets)
                and np.array_equal(self.leg_lengths, other.leg_lengths))

    def __hash__(self):
        return hash((tuple(self.joint_offsets), tuple(self.leg_lengths)))


@dataclass(frozen=True)
class Posture:
    """One of the seven calibration postures.

    ``kind`` is ``"zero"``, ``"max"`` or ``"min"``; ``axis`` is None for
    the zero posture and an axis index otherwise.
    """

    kind: str
    axis: int | None = None

    def __post_init__(self):
        if self.kind not in ("zero", "max", "min"):
            raise ValueError(f"unknown posture kind {self.kind!r}")
        if self.kind == "zero":
            if self.axis is not None:
                raise ValueError("the zero posture has no axis")
        else:
            object.__setattr__(self, "axis", axis_index(self.axis))

    @classmethod
    def zero(cls) -> "Posture":
        return cls("zero")

    @classmethod
    def max(cls, axis) -> "Posture":
        return cls("max", axis)

    @classmethod
    def min(cls, axis) -> "Posture":
        return cls("min", axis)

    @classmethod
    def parse(cls, text: str) -> "Posture":
        """Parse ``Zero``, ``XMax``, ``ymin`` and the like."""
        t = text.strip().lower()
        if t == "zero":
            return cls.zero()
        if len(t) == 4 and t[0] in AXIS_INDEX and t[1:] in ("max", "min"):
            return cls(t[1:], t[0])
        raise ValueError(f"cannot parse posture {text!r}")

    def limit(self, config: GeometryConfig) -> float:
        """Relative joint limit this posture drives to (0 for zero)."""
        if self.kind == "zero":
            return 0.0
        return config.rho_max_mm if self.kind == "max" else config.rho_min_mm

    def alpha(self, config: GeometryConfig) -> float:
        return math.asin(self.limit(config) / config.L_mm)

    def __str__(self):
        if self.kind == "zero":
            return "Zero"
        return AXES[self.axis].upper() + self.kind.capitalize()


def all_postures() -> Iterator[Posture]:
    yield Posture.zero()
    for i in range(3):
        yield Posture.max(i)
        yield Posture.min(i)


def to_relative(rho, config: GeometryConfig = PROTOTYPE) -> np.ndarray:
    """Absolute model joint coordinates to controller (relative) coordinates."""
    return np.asarray(rho, dtype=float) - config.L_mm


def to_absolute(rho_rel, config: GeometryConfig = PROTOTYPE) -> np.ndarray:
    return np.asarray(rho_rel, dtype=float) + config.L_mm
