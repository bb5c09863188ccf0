"""Arrival times of a spreading front at each site."""
from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .fitting import FitError, fit_gaussian, fit_polynomial, polynomial_eval

FRONT_MODES = ("gaussian_walk", "polynomial_otoc")


class FrontPoint(NamedTuple):
    site: float  # position coordinate used for the velocity fit (site label or distance)
    time: float  # ns
    sigma: float  # ns


class FrontScan(NamedTuple):
    points: list
    skipped: dict  # coordinate -> reason


def _sigma_floor(times) -> float:
    # a front cannot be located better than the sampling grid allows
    return float(np.mean(np.diff(times))) / math.sqrt(12.0)


def gaussian_front(times, values) -> tuple[float, float]:
    """t_front = mu - s from a Gaussian fit to the rising edge; returns (t, sigma)."""
    fit = fit_gaussian(times, values)
    if not fit.converged:
        raise FitError(f"Gaussian fit did not converge: {fit.message}")
    cov = fit.covariance
    var = cov[1, 1] + cov[2, 2] - 2 * cov[1, 2]
    sigma = math.sqrt(max(var, 0.0)) if np.isfinite(var) else np.inf
    return fit.value("mu") - fit.value("s"), max(sigma, _sigma_floor(times))


def polynomial_front(times, values, threshold: float = 0.5, degree: int = 6) -> tuple[float, float]:
    """First crossing of ``threshold`` by a polynomial fitted over the initial decay.

    The window runs from before the decay (as far back again as the drop from
    the crossing to the first minimum takes) to that first minimum. The
    uncertainty propagates the coefficient covariance through the root.
    """
    t = np.asarray(times, dtype=float)
    c = np.asarray(values, dtype=float)
    below = np.flatnonzero(c < threshold)
    if below.size == 0:
        raise FitError(f"never drops below {threshold}")
    i = int(below[0])
    if i == 0:
        raise FitError("starts below the threshold")
    k = i
    while k + 1 < c.size and c[k + 1] < c[k]:
        k += 1
    span = k - i
    start = max(0, i - max(2 * span, degree + 1))
    stop = k + 1
    if stop - start <= degree + 1:
        stop = min(c.size, start + degree + 2)
    tw, cw = t[start:stop], c[start:stop]
    fit = fit_polynomial(tw, cw, degree)
    grid = np.linspace(tw[0], tw[-1], 20 * tw.size)
    vals = polynomial_eval(fit, grid) - threshold
    sign_change = np.flatnonzero((vals[:-1] > 0) & (vals[1:] <= 0))
    if sign_change.size == 0:
        raise FitError("fitted polynomial does not cross the threshold")
    lo, hi = grid[sign_change[0]], grid[sign_change[0] + 1]
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if polynomial_eval(fit, mid) - threshold > 0:
            lo = mid
        else:
            hi = mid
    root = 0.5 * (lo + hi)
    h = fit.extra["h"]
    x = (root - fit.extra["t0"]) / h
    powers = x ** np.arange(degree + 1)
    deriv = np.polynomial.polynomial.polyval(x, np.polynomial.polynomial.polyder(fit.params)) / h
    if deriv == 0:
        raise FitError("polynomial is flat at the crossing")
    var = float(powers @ fit.covariance @ powers) / deriv ** 2
    sigma = math.sqrt(max(var, 0.0)) if np.isfinite(var) else np.inf
    return float(root), max(sigma, _sigma_floor(times))


def front_times(times, series, coordinates, mode: str = "gaussian_walk", threshold: float = 0.5,
                degree: int = 6, min_sites: int = 4, min_peak: float = 0.01) -> FrontScan:
    """Front time per column of ``series`` (shape (n_t, n_columns)).

    ``coordinates`` gives each column's position for the velocity fit (a site
    label, or a distance from the source). Columns whose fit fails are skipped
    and reported; fewer than ``min_sites`` valid fronts raise FitError. In
    walk mode a column whose population never reaches ``min_peak`` has no
    front to speak of and is skipped too.
    """
    if mode not in FRONT_MODES:
        raise ValueError(f"mode must be one of {FRONT_MODES}")
    data = np.asarray(series, dtype=float)
    coords = list(coordinates)
    if data.ndim != 2 or data.shape[1] != len(coords):
        raise ValueError("series must be (n_t, n_columns) with one coordinate per column")
    points, skipped = [], {}
    for col, x in enumerate(coords):
        try:
            if mode == "gaussian_walk":
                if data[:, col].max() < min_peak:
                    raise FitError(f"population never exceeds {min_peak}")
                tf, sig = gaussian_front(times, data[:, col])
            else:
                tf, sig = polynomial_front(times, data[:, col], threshold, degree)
        except FitError as exc:
            skipped[x] = str(exc)
            continue
        points.append(FrontPoint(float(x), tf, sig))
    if len(points) < min_sites:
        raise FitError(f"only {len(points)} valid fronts (need {min_sites}); skipped: {skipped}")
    return FrontScan(points, skipped)
