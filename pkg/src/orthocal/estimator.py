"""scikit-learn compatible front end for leg-parallelism calibration.

``LegParallelismCalibrator`` learns joint offsets and leg length errors from
one or more 12-deviation measurement sets and transforms deviations into
the residuals expected after compensation::

    cal = LegParallelismCalibrator(subset="rho").fit(measurements)
    cal.params_.joint_offsets
    cal.transform(measurements)      # residual deviations
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .accuracy import NoiseModel, analytic_covariance
from .geometry import PROTOTYPE, GeometryConfig, ParameterSet
from .identification import (ParameterSubset, build_system, calibration_matrix, rms,
                             solve_linear, solve_nonlinear)
from .measurement import MeasurementSet, predict_deviations_exact

__all__ = ["LegParallelismCalibrator", "check_deviations"]


def check_deviations(X) -> np.ndarray:
    """Coerce measurement input to a finite ``(n_sets, 12)`` array.

    Accepts a :class:`MeasurementSet`, a sequence of them, or array-likes
    already in canonical order.
    """
    if isinstance(X, MeasurementSet):
        return X.vector()[None, :]
    if isinstance(X, (list, tuple)) and X and all(isinstance(x, MeasurementSet) for x in X):
        return np.vstack([x.vector() for x in X])
    arr = check_array(X, ensure_2d=False, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.shape[1] != 12:
        raise ValueError(f"expected 12 deviations per measurement set, got {arr.shape[1]}")
    return arr


class LegParallelismCalibrator(TransformerMixin, BaseEstimator):
    """Identify joint offsets and leg lengths from gauge deviations.

    Parameters
    ----------
    config : GeometryConfig, optional
        Nominal geometry; the prototype when omitted.
    subset : {"full", "rho", "L"}
        Which parameters to identify.
    method : {"linear", "nonlinear"}
        Linear least squares, or iterative fit of the exact model.
    max_iter : int
        Iteration cap of the nonlinear fit.

    Several measurement sets passed to :meth:`fit` are averaged first, as
    with repeated gauge runs.
    """

    def __init__(self, config=None, subset="full", method="linear", max_iter=100):
        self.config = config
        self.subset = subset
        self.method = method
        self.max_iter = max_iter

    def _config(self) -> GeometryConfig:
        return PROTOTYPE if self.config is None else self.config

    def fit(self, X, y=None):
        if self.method not in ("linear", "nonlinear"):
            raise ValueError(f"method must be 'linear' or 'nonlinear', got {self.method!r}")
        subset = ParameterSubset.parse(self.subset)
        config = self._config()
        data = check_deviations(X)
        self.n_sets_ = data.shape[0]
        ms = MeasurementSet.from_vector(data.mean(axis=0), {"source": "estimator"})
        if self.method == "linear":
            result = solve_linear(build_system(ms, config), subset)
        else:
            result = solve_nonlinear(ms, config, subset, max_iter=self.max_iter)
        self.result_ = result
        self.params_ = result.parameters
        self.theta_ = result.theta.copy()
        self.residuals_ = result.residuals_after.copy()
        self.rms_ = result.rms_after
        self.singular_values_ = result.singular_values.copy()
        return self

    def predict_deviations(self) -> np.ndarray:
        """Deviations the fitted parameters produce on an uncompensated machine."""
        check_is_fitted(self, "theta_")
        config = self._config()
        if self.method == "linear":
            return calibration_matrix(config) @ self.theta_
        return predict_deviations_exact(ParameterSet.from_theta(self.theta_, config), config).vector()

    def transform(self, X):
        """Residual deviations after compensating with the fitted parameters."""
        check_is_fitted(self, "theta_")
        return check_deviations(X) - self.predict_deviations()

    def score(self, X, y=None):
        """Negative r.m.s. of the residual deviations (higher is better)."""
        return -rms(self.transform(X))

    def accuracy(self, sigma=0.01, repeats=1):
        """Analytic standard deviations of the fitted parameters for a noise level."""
        check_is_fitted(self, "theta_")
        A = calibration_matrix(self._config())
        return analytic_covariance(A, NoiseModel(sigma, repeats), self.subset)
