"""Statistical accuracy of the identified parameters.

Gauge readings carry i.i.d. Gaussian noise.  Because the Max and Min
deviations of one gauge share the same Zero reading, the deviation noise
is correlated; its covariance is ``sigma**2 / repeats * D D'`` with ``D``
the difference operator from raw readings to deviations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import PROTOTYPE, GeometryConfig, ParameterSet
from .identification import (RANK_TOL, CalibrationSystem, ParameterSubset, calibration_matrix)
from .errors import RankDeficient
from .measurement import _deviations_from_raw, _noisy_deviations, difference_operator, raw_readings

__all__ = ["NoiseModel", "AccuracyReport", "correlated_noise_matrix", "analytic_covariance",
           "monte_carlo_covariance", "trial_seed"]


@dataclass(frozen=True)
class NoiseModel:
    sigma: float = 0.01
    repeats: int = 1

    def __post_init__(self):
        if not (isinstance(self.sigma, (int, float)) and math.isfinite(self.sigma) and self.sigma >= 0):
            raise ValueError(f"sigma must be a non-negative number, got {self.sigma!r}")
        if isinstance(self.repeats, bool) or int(self.repeats) != self.repeats or self.repeats < 1:
            raise ValueError(f"repeats must be a positive integer, got {self.repeats!r}")
        object.__setattr__(self, "sigma", float(self.sigma))
        object.__setattr__(self, "repeats", int(self.repeats))

    @property
    def reading_variance(self) -> float:
        """Variance of one averaged raw reading."""
        return self.sigma ** 2 / self.repeats


@dataclass(frozen=True)
class AccuracyReport:
    """Covariance of the identification error ``identified - true``."""

    covariance: np.ndarray
    subset: ParameterSubset
    source: str
    n_trials: int | None = None
    noise: NoiseModel = field(default_factory=NoiseModel)
    std_devs_uncorrelated: np.ndarray | None = None

    @property
    def std_devs(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))

    @property
    def correlation(self) -> np.ndarray:
        sd = self.std_devs
        with np.errstate(invalid="ignore", divide="ignore"):
            corr = self.covariance / np.outer(sd, sd)
        corr[~np.isfinite(corr)] = 0.0
        np.fill_diagonal(corr, np.where(sd > 0, 1.0, 0.0))
        return corr

    @property
    def parameter_names(self) -> list[str]:
        names = ("drho_x", "drho_y", "drho_z", "dL_x", "dL_y", "dL_z")
        return [names[c] for c in self.subset.columns]

    def to_json(self) -> dict:
        out = {
            "source": self.source,
            "subset": self.subset.value,
            "sigma_mm": self.noise.sigma,
            "repeats": self.noise.repeats,
            "parameters": self.parameter_names,
            "std_devs_mm": [float(v) for v in self.std_devs],
            "covariance_mm2": self.covariance.tolist(),
            "correlation": self.correlation.tolist(),
        }
        if self.n_trials is not None:
            out["n_trials"] = self.n_trials
            out["centre"] = "true parameters"
        if self.std_devs_uncorrelated is not None:
            out["std_devs_uncorrelated_mm"] = [float(v) for v in self.std_devs_uncorrelated]
        return out


def correlated_noise_matrix(noise: NoiseModel) -> np.ndarray:
    """12x12 covariance of the deviation noise in canonical order."""
    D = difference_operator()
    return noise.reading_variance * (D @ D.T)


def _pinv_columns(A):
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    if s[-1] <= RANK_TOL * s[0]:
        raise RankDeficient(s, RANK_TOL * s[0])
    return (Vt.T / s) @ U.T


def analytic_covariance(system: CalibrationSystem | np.ndarray, noise: NoiseModel,
                        subset=ParameterSubset.FULL) -> AccuracyReport:
    """Sandwich covariance ``P E P'`` with ``P = (A'A)^-1 A'`` the least-squares operator.

    Also records the standard deviations one would get by wrongly treating
    the deviations as independent with variance ``2 sigma**2``.
    """
    subset = ParameterSubset.parse(subset)
    A = system.A if isinstance(system, CalibrationSystem) else np.asarray(system, dtype=float)
    P = _pinv_columns(A[:, subset.columns])
    E = correlated_noise_matrix(noise)
    V = P @ E @ P.T
    V = 0.5 * (V + V.T)
    V_indep = 2.0 * noise.reading_variance * (P @ P.T)
    return AccuracyReport(V, subset, "analytic", None, noise, np.sqrt(np.diag(V_indep)))


def trial_seed(seed: int, trial: int) -> int:
    return int(seed) ^ int(trial)


def monte_carlo_covariance(true_params: ParameterSet | None = None,
                           config: GeometryConfig = PROTOTYPE,
                           noise: NoiseModel = NoiseModel(), n_trials: int = 10_000, seed: int = 0,
                           subset=ParameterSubset.FULL, controller: ParameterSet | None = None,
                           mode: str | None = None) -> AccuracyReport:
    """Empirical covariance from repeated simulate-then-identify cycles.

    Trial ``k`` draws its noise from seed ``seed ^ k``, so it reproduces
    ``simulate_readings(..., seed=seed ^ k)`` exactly.  The covariance is
    centred on the true parameters and accumulated with exactly rounded
    sums, so the result does not depend on trial order.
    """
    if n_trials < 100:
        raise ValueError(f"n_trials must be at least 100, got {n_trials}")
    subset = ParameterSubset.parse(subset)
    if true_params is None:
        true_params = ParameterSet.nominal(config)
    cols = subset.columns
    P = _pinv_columns(calibration_matrix(config)[:, cols])
    truth = true_params.theta(config)[cols]
    raw = raw_readings(true_params, config, controller, mode)

    errors = np.empty((n_trials, len(cols)))
    for k in range(n_trials):
        if noise.sigma == 0.0:
            y = _deviations_from_raw(raw)
        else:
            rng = np.random.default_rng(trial_seed(seed, k))
            y = _noisy_deviations(raw, noise.sigma, noise.repeats, rng)
        errors[k] = P @ y - truth

    m = len(cols)
    cov = np.empty((m, m))
    for a in range(m):
        for b in range(a, m):
            cov[a, b] = cov[b, a] = math.fsum(errors[:, a] * errors[:, b]) / n_trials
    return AccuracyReport(cov, subset, "monte_carlo", n_trials, noise)
