"""Least-squares fits: Bessel-law scale, Gaussian arrival peaks, polynomials, light-cone lines."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..bessel import bessel_j0

MAX_ITERATIONS = 200
COST_RTOL = 1e-10
GRADIENT_TOL = 1e-6


class FitError(ValueError):
    """Input data cannot support the requested fit."""


@dataclass(frozen=True, eq=False)
class FitResult:
    """Parameters, their covariance, residual sum of squares and a convergence flag."""

    params: np.ndarray
    covariance: np.ndarray
    rss: float
    converged: bool
    names: tuple = ()
    n_iter: int = 0
    gradient_norm: float = 0.0
    message: str = ""
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        p = np.asarray(self.params, dtype=float)
        cov = np.asarray(self.covariance, dtype=float)
        if cov.shape != (p.size, p.size):
            raise ValueError("covariance shape does not match the parameter vector")
        cov = 0.5 * (cov + cov.T)
        object.__setattr__(self, "params", p)
        object.__setattr__(self, "covariance", cov)

    @property
    def errors(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))

    def value(self, name: str) -> float:
        return float(self.params[self.names.index(name)])

    def error(self, name: str) -> float:
        return float(self.errors[self.names.index(name)])


def _numeric_jacobian(fun, p, scale):
    steps = 1e-6 * scale
    cols = []
    for k in range(p.size):
        dp = np.zeros_like(p)
        dp[k] = steps[k]
        cols.append((fun(p + dp) - fun(p - dp)) / (2 * steps[k]))
    return np.column_stack(cols)


def _covariance(jac: np.ndarray, rss: float, n_obs: int) -> np.ndarray:
    dof = n_obs - jac.shape[1]
    if dof <= 0:
        return np.full((jac.shape[1], jac.shape[1]), np.inf)
    jtj = jac.T @ jac
    try:
        inv = np.linalg.inv(jtj)
    except np.linalg.LinAlgError:
        inv = np.linalg.pinv(jtj)
    return inv * (rss / dof)


def damped_least_squares(
    residuals: Callable[[np.ndarray], np.ndarray],
    p0: Sequence[float],
    names: tuple = (),
    max_iter: int = MAX_ITERATIONS,
) -> FitResult:
    """Levenberg-Marquardt style damped Gauss-Newton with central-difference Jacobians.

    Converged when an accepted step changes the cost by less than ``COST_RTOL``
    relative, or the cost itself vanishes; the gradient norm (scaled by the
    Jacobian and residual norms) must then also be small.
    """
    p = np.asarray(p0, dtype=float).copy()
    scale = np.maximum(np.abs(p), 1e-3)
    r = residuals(p)
    cost = float(r @ r)
    lam = 1e-3
    converged = False
    message = "iteration limit reached"
    it = 0
    jac = _numeric_jacobian(residuals, p, scale)
    for it in range(1, max_iter + 1):
        grad = jac.T @ r
        jtj = jac.T @ jac
        step_taken = False
        while lam < 1e16:
            a = jtj + lam * np.diag(np.maximum(np.diag(jtj), 1e-30))
            try:
                delta = -np.linalg.solve(a, grad)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            trial = p + delta
            r_trial = residuals(trial)
            cost_trial = float(r_trial @ r_trial)
            if np.isfinite(cost_trial) and cost_trial <= cost:
                step_taken = True
                break
            lam *= 10
        if not step_taken:
            message = "no decreasing step found"
            converged = cost <= 1e-28 * max(1.0, r.size)
            break
        change = (cost - cost_trial) / max(cost, 1e-300)
        p, r, cost = trial, r_trial, cost_trial
        lam = max(lam / 10, 1e-12)
        scale = np.maximum(np.abs(p), 1e-3)
        jac = _numeric_jacobian(residuals, p, scale)
        if cost <= 1e-28 * max(1.0, r.size) or change < COST_RTOL:
            converged = True
            message = "converged"
            break
    grad_norm = float(np.linalg.norm(jac.T @ r))
    # relative to |J| |r|, with an absolute floor so exact fits are not judged on roundoff
    jac_norm = float(np.linalg.norm(jac))
    bound = max(GRADIENT_TOL * jac_norm * math.sqrt(cost), 1e-10 * max(jac_norm, 1.0))
    if converged and grad_norm > bound:
        converged = False
        message = f"cost stalled with gradient norm {grad_norm:.2e}"
    return FitResult(p, _covariance(jac, cost, r.size), cost, converged, tuple(names), it, grad_norm, message)


# -- closed-form and linear fits -------------------------------------------------------------

def bessel_scale_fit(eps_list, geff_list, nu: float) -> FitResult:
    """Least-squares g in g_eff = g * J0(eps / nu); closed form."""
    eps = np.asarray(eps_list, dtype=float)
    geff = np.asarray(geff_list, dtype=float)
    if eps.shape != geff.shape or eps.size == 0:
        raise FitError("eps and g_eff must be non-empty and of equal length")
    basis = bessel_j0(eps / nu)
    ss = float(basis @ basis)
    if ss < 1e-12 * eps.size:
        raise FitError("degenerate design: every J0(eps/nu) is ~0")
    g = float(basis @ geff) / ss
    resid = geff - g * basis
    rss = float(resid @ resid)
    dof = eps.size - 1
    var = rss / dof / ss if dof > 0 else np.inf
    return FitResult(np.array([g]), np.array([[var]]), rss, True, ("g",))


def fit_polynomial(t, y, degree: int) -> FitResult:
    """Ordinary least squares polynomial; params are coefficients of (t - t0)/h, lowest first.

    ``extra`` holds the centring ``t0`` and scale ``h`` so callers can evaluate it.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.size <= degree:
        raise FitError(f"need more than {degree} samples for a degree-{degree} polynomial")
    t0 = 0.5 * (t[0] + t[-1])
    h = max(0.5 * (t[-1] - t[0]), 1e-12)
    x = (t - t0) / h
    design = np.vander(x, degree + 1, increasing=True)
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    rss = float(resid @ resid)
    cov = _covariance(design, rss, t.size)
    return FitResult(coef, cov, rss, True, tuple(f"c{k}" for k in range(degree + 1)),
                     extra={"t0": t0, "h": h})


def polynomial_eval(fit: FitResult, t) -> np.ndarray:
    x = (np.asarray(t, dtype=float) - fit.extra["t0"]) / fit.extra["h"]
    return np.polynomial.polynomial.polyval(x, fit.params)


def gaussian(t, a, mu, s):
    return a * np.exp(-((np.asarray(t, dtype=float) - mu) ** 2) / (2.0 * s * s))


def first_peak_index(values, min_fraction: float = 0.5) -> int | None:
    """Index of the first local maximum reaching ``min_fraction`` of the global maximum.

    Ignoring small early wiggles keeps the window on the arrival of the main wavefront.
    A maximum at the last sample counts when the series is still rising there.
    """
    v = np.asarray(values, dtype=float)
    top = v.max()
    for k in range(1, v.size):
        right_ok = k == v.size - 1 or v[k] > v[k + 1]
        if v[k] >= v[k - 1] and right_ok and v[k] >= min_fraction * top:
            return k
    return None


def fit_gaussian(times, values) -> FitResult:
    """Fit a exp(-(t-mu)^2 / 2 s^2) to the samples up to and including the first peak.

    Initialised from the peak height and position and the second moment of the
    rising edge. Parameters are (a, mu, s) with s > 0.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if t.shape != y.shape or t.size < 4:
        raise FitError("need at least four samples")
    if np.any(y < -1e-12):
        raise FitError("values must be non-negative")
    if not y.max() > 2.0 * np.median(y):
        raise FitError("no discernible peak (max <= 2 x median)")
    k = first_peak_index(y)
    if k is None or k < 2:
        raise FitError("no peak with enough rising samples before it")
    tw, yw = t[: k + 1], y[: k + 1]
    a0, mu0 = yw[-1], tw[-1]
    w = np.clip(yw, 0, None)
    s0 = math.sqrt(max(float(w @ (tw - mu0) ** 2) / max(float(w.sum()), 1e-300), 1e-6))
    s0 = max(s0, 0.5 * (tw[1] - tw[0]))

    def resid(p):
        return gaussian(tw, p[0], p[1], p[2]) - yw

    fit = damped_least_squares(resid, [a0, mu0, s0], ("a", "mu", "s"))
    if fit.params[2] < 0:
        params = fit.params * np.array([1, 1, -1])
        cov = fit.covariance * np.outer([1, 1, -1], [1, 1, -1])
        fit = FitResult(params, cov, fit.rss, fit.converged, fit.names, fit.n_iter, fit.gradient_norm,
                        fit.message, fit.extra)
    fit.extra.update(window_end=float(tw[-1]), n_points=int(tw.size))
    return fit


def fit_velocity(front_points) -> FitResult:
    """Weighted line t = j / v + c through (site, t, sigma) points.

    Returns params (velocity [sites/us], intercept [ns]) with the covariance
    propagated from the slope. The covariance is scaled by the reduced
    chi-square, so scatter about the line shows up in the error bar.
    """
    pts = np.asarray([(p[0], p[1], p[2] if len(p) > 2 else 1.0) for p in front_points], dtype=float)
    if pts.shape[0] < 3:
        raise FitError("need at least three front points")
    j, t, sig = pts.T
    if np.any(sig <= 0):
        raise FitError("front uncertainties must be positive")
    w = 1.0 / sig
    design = np.column_stack([j, np.ones_like(j)])
    coef, *_ = np.linalg.lstsq(design * w[:, None], t * w, rcond=None)
    resid = (t - design @ coef) * w
    rss = float(resid @ resid)
    cov_line = _covariance(design * w[:, None], rss, j.size)
    slope, intercept = coef
    scale_j = np.ptp(j) if np.ptp(j) > 0 else 1.0
    if abs(slope) * scale_j < 1e-9 * max(np.ptp(t), np.abs(t).max(), 1e-300) or slope == 0:
        return FitResult(np.array([np.inf, intercept]), np.full((2, 2), np.inf), rss, False,
                         ("velocity", "intercept"), message="slope ~ 0: velocity diverges")
    v = 1e3 / slope
    jac = np.array([[-1e3 / slope ** 2, 0.0], [0.0, 1.0]])
    cov = jac @ cov_line @ jac.T
    return FitResult(np.array([v, intercept]), cov, rss, True, ("velocity", "intercept"),
                     extra={"slope": slope})
