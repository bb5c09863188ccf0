"""scikit-learn style wrappers around the fitters, for use in pipelines and sweeps."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ..bessel import bessel_j0
from .fitting import bessel_scale_fit, fit_gaussian, fit_velocity, gaussian


def _column(x) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 2:
        if arr.shape[1] != 1:
            raise ValueError(f"expected a single feature column, got shape {arr.shape}")
        arr = arr[:, 0]
    if arr.ndim != 1 or not np.all(np.isfinite(arr)):
        raise ValueError("expected a finite 1-d feature")
    return arr


class BesselLawRegressor(RegressorMixin, BaseEstimator):
    """g_eff(eps) = g J0(eps / nu); X holds eps in MHz."""

    def __init__(self, drive_frequency: float = 120.0):
        self.drive_frequency = drive_frequency

    def fit(self, X, y):
        self.result_ = bessel_scale_fit(_column(X), np.asarray(y, dtype=float), self.drive_frequency)
        self.scale_ = self.result_.value("g")
        return self

    def predict(self, X):
        check_is_fitted(self, "scale_")
        return self.scale_ * bessel_j0(_column(X) / self.drive_frequency)


class GaussianPeakRegressor(RegressorMixin, BaseEstimator):
    """Gaussian arrival peak fitted to the rising edge of a population trace; X holds time."""

    def fit(self, X, y):
        self.result_ = fit_gaussian(_column(X), np.asarray(y, dtype=float))
        self.amplitude_, self.center_, self.width_ = self.result_.params
        self.front_time_ = self.center_ - self.width_
        return self

    def predict(self, X):
        check_is_fitted(self, "center_")
        return gaussian(_column(X), self.amplitude_, self.center_, self.width_)


class LightConeRegressor(RegressorMixin, BaseEstimator):
    """Linear light cone t = x / v + c; X holds positions, y front times (ns).

    ``sample_weight`` in ``fit`` is read as 1 / sigma^2 of each front time.
    """

    def fit(self, X, y, sample_weight=None):
        x = _column(X)
        t = np.asarray(y, dtype=float)
        sigma = np.ones_like(t) if sample_weight is None else 1.0 / np.sqrt(np.asarray(sample_weight, float))
        self.result_ = fit_velocity(list(zip(x, t, sigma)))
        self.velocity_, self.intercept_ = self.result_.params
        self.velocity_error_ = self.result_.error("velocity")
        return self

    def predict(self, X):
        check_is_fitted(self, "velocity_")
        return 1e3 * _column(X) / self.velocity_ + self.intercept_
