"""Sensitivity of the TCP position to the six calibration parameters.

Differentiating the leg constraints gives ``M dp = D d(drho) + diag(L) dL``
with ``M[i] = p - q_i e_i`` and ``D = diag(p_i - q_i)``, where
``q_i = rho_i + drho_i``.  The parameter Jacobian is ``[M^-1 D | M^-1 diag(L)]``
with columns (drho_x, drho_y, drho_z, dL_x, dL_y, dL_z).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import Inconsistent, SingularPosture
from .geometry import PROTOTYPE, GeometryConfig, ParameterSet, Posture, all_postures, complementary
from .kinematics import constraint_residuals

__all__ = ["Posture", "ParameterJacobian", "jacobian_at", "posture_point", "posture_jacobian",
           "all_postures", "SINGULAR_TOL"]

SINGULAR_TOL = 1e-12


@dataclass(frozen=True)
class ParameterJacobian:
    J: np.ndarray
    p: np.ndarray
    rho: np.ndarray

    @property
    def J_rho(self) -> np.ndarray:
        return self.J[:, :3]

    @property
    def J_L(self) -> np.ndarray:
        return self.J[:, 3:]

    def to_json(self) -> dict:
        return {
            "p_mm": self.p.tolist(),
            "rho_mm": self.rho.tolist(),
            "J": self.J.tolist(),
        }


def _scaled_det(M):
    norms = np.linalg.norm(M, axis=1)
    if np.any(norms == 0.0):
        return 0.0
    return abs(np.linalg.det(M / norms[:, None]))


def jacobian_at(p, rho, params: ParameterSet | None = None) -> ParameterJacobian:
    """Analytic 3x6 parameter Jacobian at a consistent (p, rho) pair."""
    if params is None:
        params = ParameterSet.nominal()
    p = np.asarray(p, dtype=float).reshape(3)
    rho = np.asarray(rho, dtype=float).reshape(3)
    res = constraint_residuals(p, rho, params)
    if np.max(np.abs(res)) > 1e-6:
        raise Inconsistent(f"(p, rho) violates the leg constraints: residuals {res} mm^2")
    q = rho + params.joint_offsets
    M = np.tile(p, (3, 1)) - np.diag(q)
    if _scaled_det(M) < SINGULAR_TOL:
        raise SingularPosture(f"constraint matrix is singular at p={p}, rho={rho}")
    rhs = np.hstack([np.diag(p - q), np.diag(params.leg_lengths)])
    J = np.linalg.solve(M, rhs)
    return ParameterJacobian(J, p.copy(), rho.copy())


def posture_point(posture: Posture, config: GeometryConfig = PROTOTYPE) -> tuple[np.ndarray, np.ndarray]:
    """Nominal (p, rho) of a calibration posture.

    Max/Min along axis ``i`` put the TCP at ``L sin(alpha) e_i`` with the
    driven joint at ``L + L sin(alpha)`` and the other two at ``L cos(alpha)``.
    """
    L = config.L_mm
    if posture.kind == "zero":
        return np.zeros(3), np.full(3, L)
    alpha = posture.alpha(config)
    i = posture.axis
    p = np.zeros(3)
    p[i] = L * math.sin(alpha)
    rho = np.full(3, L * math.cos(alpha))
    rho[i] = L + L * math.sin(alpha)
    return p, rho


def posture_jacobian(posture: Posture, config: GeometryConfig = PROTOTYPE) -> ParameterJacobian:
    """Closed-form Jacobian at a nominal calibration posture.

    At Zero this is ``[I | -I]``.  For Max/Min along axis ``i`` the driven
    leg keeps ``dp_i = drho_i - dL_i`` while each other axis ``j`` picks up
    ``tan(alpha)`` of the driven leg's parameters and ``-1/cos(alpha)`` of
    its own leg length.
    """
    p, rho = posture_point(posture, config)
    J = np.hstack([np.eye(3), -np.eye(3)])
    if posture.kind != "zero":
        alpha = posture.alpha(config)
        T = math.tan(alpha)
        sec = 1.0 / math.cos(alpha)
        i = posture.axis
        for j in complementary(i):
            J[j, i] = T
            J[j, 3 + i] = -T
            J[j, 3 + j] = -sec
    return ParameterJacobian(J, p, rho)
