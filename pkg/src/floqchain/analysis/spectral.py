"""Dominant oscillation frequency of a uniformly sampled signal."""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

ZERO_PAD = 8
PEAK_OVER_MEDIAN = 3.0


class FrequencyEstimate(NamedTuple):
    frequency: float  # MHz
    confident: bool
    peak_ratio: float


def dominant_frequency(times, values, zero_pad: int = ZERO_PAD) -> FrequencyEstimate:
    """Peak of the magnitude spectrum, mean removed, refined by a parabola through three bins.

    ``times`` in ns, result in MHz. A spectrum whose largest bin does not exceed
    three times the median bin is treated as flat: frequency 0, not confident.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if t.shape != y.shape or t.ndim != 1:
        raise ValueError("times and values must be 1-d and of equal length")
    if t.size < 16:
        raise ValueError("need at least 16 samples")
    dt = np.diff(t)
    if np.ptp(dt) > 1e-6 * dt.mean():
        raise ValueError("samples must be uniformly spaced")
    step = float(dt.mean())
    y = y - y.mean()
    n_fft = zero_pad * t.size
    spec = np.abs(np.fft.rfft(y, n=n_fft))
    freqs = np.fft.rfftfreq(n_fft, d=step)  # 1/ns = GHz
    # compare against the unpadded resolution so padding does not dilute the median
    coarse = np.abs(np.fft.rfft(y))
    median = float(np.median(coarse[1:])) if coarse.size > 1 else 0.0
    k = int(np.argmax(spec[1:]) + 1)
    peak_ratio = float(spec[k] / median) if median > 0 else (np.inf if spec[k] > 0 else 0.0)
    if not spec[k] > 0 or peak_ratio <= PEAK_OVER_MEDIAN:
        return FrequencyEstimate(0.0, False, peak_ratio)
    shift = 0.0
    if 1 <= k < spec.size - 1:
        a, b, c = spec[k - 1], spec[k], spec[k + 1]
        denom = a - 2 * b + c
        if denom != 0:
            shift = 0.5 * (a - c) / denom
    return FrequencyEstimate(float((k + shift) * (freqs[1] - freqs[0]) * 1e3), True, peak_ratio)


class Recurrence(NamedTuple):
    lag: float  # ns
    correlation: float
    curve: np.ndarray  # correlation at every lag, starting from lag 0


def recurrence_correlation(times, values, window: float, drop: float = 0.5) -> Recurrence:
    """Pearson correlation between the opening window of a trace and lagged copies of it.

    ``values`` may be (n_t,) or (n_t, n_sites); all sites are pooled. The
    recurrence is the first local maximum of the curve after it has fallen
    below ``drop``. A curve that never falls below ``drop``, or never rises
    again, gives lag nan and correlation nan.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    if y.shape[0] != t.size:
        raise ValueError("values must have one row per time")
    step = float(np.mean(np.diff(t)))
    if np.ptp(np.diff(t)) > 1e-6 * step:
        raise ValueError("samples must be uniformly spaced")
    w = int(round(window / step))
    if not 2 <= w < t.size - 2:
        raise ValueError("window must be shorter than the trace and span at least two samples")
    ref = y[:w].ravel()
    curve = np.array([np.corrcoef(ref, y[k:k + w].ravel())[0, 1] for k in range(t.size - w + 1)])
    below = np.flatnonzero(curve < drop)
    if below.size:
        i = below[0]
        peaks = [j for j in range(i + 1, curve.size - 1) if curve[j - 1] <= curve[j] >= curve[j + 1]]
        if peaks:
            return Recurrence(peaks[0] * step, float(curve[peaks[0]]), curve)
    return Recurrence(float("nan"), float("nan"), curve)
