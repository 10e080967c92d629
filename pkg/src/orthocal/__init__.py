"""Leg-parallelism calibration of 3-dof translational parallel machines with orthogonal actuators."""

__version__ = "0.1.0"

from .errors import (DidNotConverge, GaugeMiss, Inconsistent, IncompleteSet, NoRealSolution,
                     OrthocalError, OutOfReach, RankDeficient, SingularJoint, SingularPosture,
                     Unreachable)
from .geometry import PROTOTYPE, GeometryConfig, ParameterSet, Posture, all_postures
from .kinematics import (constraint_residuals, direct_kinematics, inverse_kinematics, leg_angles,
                         tcp_from_angles)
from .differential import jacobian_at, posture_jacobian
from .measurement import (AggregatedDeviations, Measurement, MeasurementSet, load_measurements,
                          predict_deviations_exact, predict_deviations_linear, save_measurements,
                          simulate_readings)
from .identification import (CalibrationResult, ParameterSubset, build_system, calibration_matrix,
                             expected_improvement, fit_aggregated, solve_linear, solve_nonlinear)
from .accuracy import NoiseModel, analytic_covariance, monte_carlo_covariance
from .estimator import LegParallelismCalibrator

__all__ = [name for name in dir() if not name.startswith("_")]
