"""Forward and inverse kinematics of the simplified three-leg PSS model.

Each leg is a rigid bar of length ``L_i`` joining the prismatic joint centre
``(rho_i + drho_i) e_i`` to the tool centre point ``p``, which gives the
three constraints

    (p_i - (rho_i + drho_i))**2 + p_j**2 + p_k**2 = L_i**2.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .errors import Inconsistent, NoRealSolution, OutOfReach, SingularJoint
from .geometry import (AXES, PROTOTYPE, GeometryConfig, ParameterSet, complementary,
                       to_absolute, to_relative)

__all__ = [
    "GeometryConfig", "ParameterSet", "IKResult", "LegAngles",
    "inverse_kinematics", "direct_kinematics", "constraint_residuals", "leg_angles",
    "within_limits", "to_relative", "to_absolute",
    "CONSISTENCY_TOL", "ROUND_TRIP_TOL",
]

CONSISTENCY_TOL = 1e-9  # mm^2
ROUND_TRIP_TOL = 1e-6  # mm
_INCONSISTENT_TOL = 1e-6  # mm^2

DEFAULT_INDICES = (1, 1, 1)


class IKResult(NamedTuple):
    rho: np.ndarray
    reachable: bool


class LegAngles(NamedTuple):
    theta: np.ndarray
    beta: np.ndarray


def _vec3(v, name="vector"):
    arr = np.asarray(v, dtype=float).reshape(-1)
    if arr.shape != (3,):
        raise ValueError(f"{name} must have 3 components, got shape {np.shape(v)}")
    return arr


def _indices(s):
    s = tuple(int(v) for v in s)
    if len(s) != 3 or any(v not in (1, -1) for v in s):
        raise ValueError(f"configuration indices must be three values in {{+1, -1}}, got {s}")
    return np.array(s, dtype=float)


def within_limits(rho, config: GeometryConfig = PROTOTYPE, tol: float = 1e-9) -> bool:
    lo, hi = config.absolute_limits()
    rho = _vec3(rho, "rho")
    return bool(np.all(rho >= lo - tol) and np.all(rho <= hi + tol))


def inverse_kinematics(p, params: ParameterSet | None = None, s=DEFAULT_INDICES,
                       config: GeometryConfig = PROTOTYPE) -> IKResult:
    """Joint coordinates placing the TCP at ``p``.

    Returns the absolute joint vector together with a flag telling whether
    it respects the software joint limits of ``config``.
    """
    if params is None:
        params = ParameterSet.nominal(config)
    p = _vec3(p, "p")
    signs = _indices(s)
    L = params.leg_lengths
    radicands = np.empty(3)
    for i in range(3):
        j, k = complementary(i)
        radicands[i] = L[i] ** 2 - p[j] ** 2 - p[k] ** 2
    bad = np.flatnonzero(radicands < 0)
    if bad.size:
        raise OutOfReach([AXES[i] for i in bad], radicands[bad])
    rho = p + signs * np.sqrt(radicands) - params.joint_offsets
    return IKResult(rho, within_limits(rho, config))


def constraint_residuals(p, rho, params: ParameterSet | None = None) -> np.ndarray:
    """Left minus right side of the three leg constraints, in mm^2."""
    if params is None:
        params = ParameterSet.nominal()
    p = _vec3(p, "p")
    q = _vec3(rho, "rho") + params.joint_offsets
    out = np.empty(3)
    for i in range(3):
        j, k = complementary(i)
        out[i] = (p[i] - q[i]) ** 2 + p[j] ** 2 + p[k] ** 2 - params.leg_lengths[i] ** 2
    return out


def _quadratic_coefficients(q, L):
    Q = q * q
    L2 = L * L
    # products over the complementary pair (j, k) of each leg i
    QjQk = np.array([Q[1] * Q[2], Q[2] * Q[0], Q[0] * Q[1]])
    prod = Q[0] * Q[1] * Q[2]
    A = QjQk.sum()
    B = prod - np.dot(L2, QjQk)
    C = prod * (Q.sum() / 4.0 - L2.sum() / 2.0) + np.dot(L2 * L2, QjQk) / 4.0
    return A, B, C


def direct_kinematics(rho, params: ParameterSet | None = None) -> np.ndarray:
    """TCP position for absolute joint coordinates ``rho``.

    Subtracting the constraints pairwise leaves
    ``p_i = q_i/2 + t/q_i - L_i**2/(2 q_i)`` with ``q_i = rho_i + drho_i``
    and ``t = |p|**2 / 2``, so ``t`` solves ``A t**2 + B t + C = 0``.  The
    working assembly mode (TCP on the origin side of the plane through the
    three joint centres) is the smaller root.
    """
    if params is None:
        params = ParameterSet.nominal()
    q = _vec3(rho, "rho") + params.joint_offsets
    L = params.leg_lengths
    if np.any(q == 0.0):
        raise SingularJoint([AXES[i] for i in np.flatnonzero(q == 0.0)])
    A, B, C = _quadratic_coefficients(q, L)
    disc = B * B - 4.0 * A * C
    if disc < 0.0:
        # tolerate round-off at a tangency
        if disc > -1e-12 * B * B:
            disc = 0.0
        else:
            raise NoRealSolution(disc)
    root = math.sqrt(disc)
    if B < 0.0:
        t = 2.0 * C / (-B + root)
    else:
        t = (-B - root) / (2.0 * A)
    return q / 2.0 + t / q - L * L / (2.0 * q)


def leg_angles(p, rho, params: ParameterSet | None = None) -> LegAngles:
    """Orientation angles of each leg bar.

    For leg ``i`` with complementary axes ``j = i+1``, ``k = i+2`` the bar
    from the joint centre to the TCP is parametrised as

        p_i = q_i - cos(theta) cos(beta) L_i
        p_j = sin(theta) cos(beta) L_i
        p_k = -sin(beta) L_i

    so all angles vanish at the nominal zero posture, where each bar points
    from its joint back to the origin.
    """
    if params is None:
        params = ParameterSet.nominal()
    p = _vec3(p, "p")
    rho = _vec3(rho, "rho")
    res = constraint_residuals(p, rho, params)
    if np.max(np.abs(res)) > _INCONSISTENT_TOL:
        raise Inconsistent(f"(p, rho) violates the leg constraints: residuals {res} mm^2")
    q = rho + params.joint_offsets
    theta = np.empty(3)
    beta = np.empty(3)
    for i in range(3):
        j, k = complementary(i)
        L = params.leg_lengths[i]
        beta[i] = math.asin(max(-1.0, min(1.0, -p[k] / L)))
        theta[i] = math.atan2(p[j], q[i] - p[i])
    return LegAngles(theta, beta)


def tcp_from_angles(rho, angles: LegAngles, params: ParameterSet | None = None) -> np.ndarray:
    """Rebuild the TCP from each leg's angles; returns a 3x3 array, one row per leg."""
    if params is None:
        params = ParameterSet.nominal()
    q = _vec3(rho, "rho") + params.joint_offsets
    out = np.empty((3, 3))
    for i in range(3):
        j, k = complementary(i)
        L = params.leg_lengths[i]
        th, be = angles.theta[i], angles.beta[i]
        out[i, i] = q[i] - math.cos(th) * math.cos(be) * L
        out[i, j] = math.sin(th) * math.cos(be) * L
        out[i, k] = -math.sin(be) * L
    return out
