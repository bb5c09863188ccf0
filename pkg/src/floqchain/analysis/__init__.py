"""Data reduction: frequencies, fits, light-cone fronts and the readout model."""
from .estimators import BesselLawRegressor, GaussianPeakRegressor, LightConeRegressor
from .fitting import (
    FitError,
    FitResult,
    bessel_scale_fit,
    damped_least_squares,
    fit_gaussian,
    fit_polynomial,
    fit_velocity,
    polynomial_eval,
)
from .fronts import FrontPoint, FrontScan, front_times, gaussian_front, polynomial_front
from .readout import (
    CalibratedMarginals,
    ConfusionModel,
    calibrate_counts,
    post_select,
    sample_shots,
)
from .spectral import FrequencyEstimate, Recurrence, dominant_frequency, recurrence_correlation

__all__ = [
    "BesselLawRegressor",
    "CalibratedMarginals",
    "ConfusionModel",
    "FitError",
    "FitResult",
    "FrequencyEstimate",
    "FrontPoint",
    "FrontScan",
    "GaussianPeakRegressor",
    "LightConeRegressor",
    "Recurrence",
    "bessel_scale_fit",
    "calibrate_counts",
    "damped_least_squares",
    "dominant_frequency",
    "fit_gaussian",
    "fit_polynomial",
    "fit_velocity",
    "front_times",
    "gaussian_front",
    "polynomial_eval",
    "polynomial_front",
    "post_select",
    "recurrence_correlation",
    "sample_shots",
]
