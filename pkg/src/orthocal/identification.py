"""Assemble and solve the 12x6 calibration system.

Each deviation of leg ``j`` measured along ``i`` is linear in the
parameters:

    a * drho_i + b * drho_j - c * dL_i - b * dL_j

with ``a = sin(alpha)``, ``b = (0.5 + sin(alpha)) tan(alpha)`` and
``c = (0.5 + sin(alpha)) / cos(alpha) - 0.5``, where ``alpha`` is the leg
inclination at the Max ('+') or Min ('-') posture.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DidNotConverge, RankDeficient
from .geometry import PROTOTYPE, GeometryConfig, ParameterSet
from .measurement import (AGGREGATED_ORDER, CANONICAL_INDEX, CANONICAL_ORDER, MeasurementSet,
                          label, predict_deviations_exact)

__all__ = [
    "ParameterSubset", "CalibrationSystem", "CalibrationResult", "ImprovementTable",
    "posture_coefficients", "build_system", "calibration_matrix", "aggregated_matrix",
    "solve_linear", "solve_nonlinear", "fit_aggregated", "expected_improvement", "rms",
    "RANK_TOL",
]

RANK_TOL = 1e-10


class ParameterSubset(enum.Enum):
    FULL = "full"
    OFFSETS_ONLY = "rho"
    LENGTHS_ONLY = "L"

    @property
    def columns(self) -> list[int]:
        return {"full": [0, 1, 2, 3, 4, 5], "rho": [0, 1, 2], "L": [3, 4, 5]}[self.value]

    @classmethod
    def parse(cls, value) -> "ParameterSubset":
        if isinstance(value, cls):
            return value
        aliases = {
            "full": cls.FULL, "all": cls.FULL,
            "rho": cls.OFFSETS_ONLY, "offsets": cls.OFFSETS_ONLY, "offsets_only": cls.OFFSETS_ONLY,
            "l": cls.LENGTHS_ONLY, "lengths": cls.LENGTHS_ONLY, "lengths_only": cls.LENGTHS_ONLY,
        }
        try:
            return aliases[str(value).lower()]
        except KeyError:
            raise ValueError(f"unknown parameter subset {value!r}") from None


PARAMETER_NAMES = ("drho_x", "drho_y", "drho_z", "dL_x", "dL_y", "dL_z")


def rms(values) -> float:
    v = np.asarray(values, dtype=float)
    return float(np.sqrt(np.mean(v * v))) if v.size else 0.0


def posture_coefficients(alpha: float) -> tuple[float, float, float]:
    s = math.sin(alpha)
    return s, (0.5 + s) * math.tan(alpha), (0.5 + s) / math.cos(alpha) - 0.5


def calibration_matrix(config: GeometryConfig = PROTOTYPE) -> np.ndarray:
    """The 12x6 sensitivity matrix in canonical row order."""
    coeff = {"+": posture_coefficients(config.alpha_max),
             "-": posture_coefficients(config.alpha_min)}
    A = np.zeros((12, 6))
    for row, (leg, direction, sign) in enumerate(CANONICAL_ORDER):
        a, b, c = coeff[sign]
        A[row, direction] = a
        A[row, leg] = b
        A[row, 3 + direction] = -c
        A[row, 3 + leg] = -b
    return A


def aggregated_matrix(config: GeometryConfig = PROTOTYPE) -> np.ndarray:
    """6x6 matrix of the Max-minus-Min deviations.

    Rank 5: shifting all offsets by ``k`` and all leg lengths by
    ``k (a+b)/(b+c)`` (coefficient differences between Max and Min) leaves
    every aggregated deviation unchanged.
    """
    A = calibration_matrix(config)
    return np.array([A[CANONICAL_INDEX[(leg, d, "+")]] - A[CANONICAL_INDEX[(leg, d, "-")]]
                     for leg, d in AGGREGATED_ORDER])


@dataclass(frozen=True)
class CalibrationSystem:
    A: np.ndarray
    rhs: np.ndarray
    alpha1: float
    alpha2: float
    coefficients: dict
    config: GeometryConfig = PROTOTYPE

    @property
    def singular_values(self) -> np.ndarray:
        return np.linalg.svd(self.A, compute_uv=False)


def build_system(measurements: MeasurementSet, config: GeometryConfig = PROTOTYPE) -> CalibrationSystem:
    rhs = measurements.vector()
    a1, b1, c1 = posture_coefficients(config.alpha_max)
    a2, b2, c2 = posture_coefficients(config.alpha_min)
    coefficients = {"a1": a1, "b1": b1, "c1": c1, "a2": a2, "b2": b2, "c2": c2}
    return CalibrationSystem(calibration_matrix(config), rhs, config.alpha_max, config.alpha_min,
                             coefficients, config)


@dataclass(frozen=True)
class CalibrationResult:
    """Identified parameters and residuals before and after compensation.

    Residuals are ``measured - predicted`` in canonical order (or in
    aggregated order for a fit on aggregated deviations); the "before"
    residuals are the raw measurements since the nominal model predicts
    zero deviation.
    """

    parameters: ParameterSet
    theta: np.ndarray
    residuals_before: np.ndarray
    residuals_after: np.ndarray
    method: str
    subset: ParameterSubset
    singular_values: np.ndarray = field(default_factory=lambda: np.zeros(0))
    iterations: int = 0
    converged: bool = True
    labels: tuple = tuple(label(k) for k in CANONICAL_ORDER)

    @property
    def rms_before(self) -> float:
        return rms(self.residuals_before)

    @property
    def rms_after(self) -> float:
        return rms(self.residuals_after)

    @property
    def predicted(self) -> np.ndarray:
        return self.residuals_before - self.residuals_after

    def to_json(self, config: GeometryConfig = PROTOTYPE) -> dict:
        return {
            "method": self.method,
            "subset": self.subset.value,
            "parameters": self.parameters.to_json(config),
            "labels": list(self.labels),
            "residuals_before_mm": [float(v) for v in self.residuals_before],
            "residuals_after_mm": [float(v) for v in self.residuals_after],
            "rms_before_mm": self.rms_before,
            "rms_after_mm": self.rms_after,
            "singular_values": [float(v) for v in self.singular_values],
            "iterations": self.iterations,
            "converged": self.converged,
        }


def _svd_solve(A, b):
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    if s.size == 0 or s[-1] <= RANK_TOL * s[0]:
        raise RankDeficient(s, RANK_TOL * (s[0] if s.size else 0.0))
    return Vt.T @ ((U.T @ b) / s), s


def solve_linear(system: CalibrationSystem, subset=ParameterSubset.FULL) -> CalibrationResult:
    """Least-squares solution over the selected columns (SVD, no normal equations)."""
    subset = ParameterSubset.parse(subset)
    cols = subset.columns
    A_sel = system.A[:, cols]
    x, s = _svd_solve(A_sel, system.rhs)
    theta = np.zeros(6)
    theta[cols] = x
    residuals = system.rhs - A_sel @ x
    return CalibrationResult(ParameterSet.from_theta(theta, system.config), theta,
                             system.rhs.copy(), residuals, "linear", subset, s)


def fit_aggregated(data, config: GeometryConfig = PROTOTYPE,
                   subset=ParameterSubset.OFFSETS_ONLY) -> CalibrationResult:
    """Fit parameters to the six Max-minus-Min deviations alone.

    The full parameter set is not identifiable from these (the aggregated
    matrix has rank 5) and raises :class:`RankDeficient`.
    """
    subset = ParameterSubset.parse(subset)
    agg = data.aggregated().vector()
    cols = subset.columns
    A_sel = aggregated_matrix(config)[:, cols]
    x, s = _svd_solve(A_sel, agg)
    theta = np.zeros(6)
    theta[cols] = x
    return CalibrationResult(ParameterSet.from_theta(theta, config), theta, agg, agg - A_sel @ x,
                             "linear_aggregated", subset, s,
                             labels=tuple(label(k) for k in AGGREGATED_ORDER))


def _exact_vector(theta, config, mode):
    return predict_deviations_exact(ParameterSet.from_theta(theta, config), config, mode=mode).vector()


def solve_nonlinear(measurements: MeasurementSet, config: GeometryConfig = PROTOTYPE,
                    subset=ParameterSubset.FULL, initial: ParameterSet | None = None,
                    max_iter: int = 100, step_tol: float = 1e-9, fd_step: float = 1e-5,
                    mode: str | None = None) -> CalibrationResult:
    """Fit the exact measurement model by damped Gauss-Newton iterations.

    Each step solves ``(J'J + lam diag(J'J)) d = J'r`` (as an augmented
    least-squares problem) with a central-difference Jacobian of the exact
    deviation model.  ``lam`` starts at 1e-3, grows tenfold on rejected
    steps and shrinks tenfold on accepted ones.  Iteration stops once a
    step is shorter than ``step_tol`` mm.
    """
    subset = ParameterSubset.parse(subset)
    cols = subset.columns
    y = measurements.vector()
    if initial is None:
        initial = solve_linear(build_system(measurements, config), subset).parameters
    theta = initial.theta(config).copy()
    # unselected parameters stay at their initial values
    mask = np.zeros(6, dtype=bool)
    mask[cols] = True

    r = y - _exact_vector(theta, config, mode)
    cost = float(r @ r)
    lam = 1e-3
    converged = False
    iterations = 0
    s = np.zeros(0)
    for iterations in range(1, max_iter + 1):
        J = np.empty((12, len(cols)))
        for n, c in enumerate(cols):
            e = np.zeros(6)
            e[c] = fd_step
            J[:, n] = (_exact_vector(theta + e, config, mode)
                       - _exact_vector(theta - e, config, mode)) / (2 * fd_step)
        s = np.linalg.svd(J, compute_uv=False)
        scale = np.sqrt(np.maximum(np.sum(J * J, axis=0), 1e-300))
        while True:
            aug_A = np.vstack([J, np.diag(np.sqrt(lam) * scale)])
            aug_b = np.concatenate([r, np.zeros(len(cols))])
            step = np.linalg.lstsq(aug_A, aug_b, rcond=None)[0]
            if np.linalg.norm(step) < step_tol:
                converged = True
                break
            trial = theta.copy()
            trial[mask] += step
            r_trial = y - _exact_vector(trial, config, mode)
            cost_trial = float(r_trial @ r_trial)
            if cost_trial <= cost:
                theta, r, cost = trial, r_trial, cost_trial
                lam = max(lam / 10.0, 1e-12)
                break
            lam *= 10.0
        if converged:
            break

    result = CalibrationResult(ParameterSet.from_theta(theta, config), theta, y.copy(), r,
                               "nonlinear", subset, s, iterations, converged)
    if not converged:
        raise DidNotConverge(result, f"no convergence after {max_iter} iterations "
                                     f"(rms residual {result.rms_after:.4g} mm)")
    return result


@dataclass(frozen=True)
class ImprovementTable:
    """Aggregated deviations before and after compensation."""

    labels: tuple
    before: np.ndarray
    after: np.ndarray
    result: CalibrationResult

    @property
    def rms_before(self) -> float:
        return rms(self.before)

    @property
    def rms_after(self) -> float:
        return rms(self.after)

    def to_json(self) -> dict:
        return {
            "labels": list(self.labels),
            "before_mm": [float(v) for v in self.before],
            "after_mm": [float(v) for v in self.after],
            "rms_before_mm": self.rms_before,
            "rms_after_mm": self.rms_after,
            "subset": self.result.subset.value,
            "method": self.result.method,
        }


def expected_improvement(measurements, result: CalibrationResult | None = None,
                         config: GeometryConfig = PROTOTYPE) -> ImprovementTable:
    """Max-minus-Min deviations before and after compensation.

    With ``result`` the linear model of its parameters is subtracted.
    Without it the offsets are fitted to the aggregated deviations
    themselves, which works for data sets that only report those.
    """
    agg = measurements.aggregated().vector()
    if result is None:
        result = fit_aggregated(measurements, config, ParameterSubset.OFFSETS_ONLY)
    after = agg - aggregated_matrix(config) @ result.theta
    return ImprovementTable(tuple(label(k) for k in AGGREGATED_ORDER), agg, after, result)
