"""Schrodinger-equation integrators for lab-frame and effective Hamiltonians.

Time-independent Hamiltonians are propagated exactly through a cached
eigendecomposition when the space is small enough, otherwise through the same
exponential stepping used for driven Hamiltonians. Driven Hamiltonians use a
fourth-order commutator-free Magnus step (two exponentials at the Gauss
points, the default), exp(-i H(t_k + dt/2) dt) per step (second-order
Magnus), or classical RK4.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Callable, Union

import numpy as np
import scipy.linalg as la

from .hamiltonian import EffectiveHamiltonian, LabHamiltonian
from .model import FockBasis, StateVector

Hamiltonian = Union[LabHamiltonian, EffectiveHamiltonian]

METHODS = ("commutator_free_magnus4", "piecewise_exponential_midpoint", "rk4")
DEFAULT_METHOD = "commutator_free_magnus4"
STEPS_PER_PERIOD = 64
UNDRIVEN_DT = 0.5
SPECTRAL_MAX_DIM = 4096
DENSE_STEP_MAX_DIM = 64
NORM_TOLERANCE = 1e-8


class ConvergenceError(RuntimeError):
    """Raised when a step-halving check fails."""


@dataclass(frozen=True)
class IntegratorConfig:
    """Step size ``dt`` in ns (None: period/64 under drive, 0.5 ns otherwise) and
    sample ``stride`` in steps (None: one Floquet period under drive, else 1)."""

    method: str = DEFAULT_METHOD
    dt: float | None = None
    stride: int | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown integrator {self.method!r}; expected one of {METHODS}")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.stride is not None and self.stride < 1:
            raise ValueError("stride must be >= 1")

    def resolve(self, ham: Hamiltonian) -> tuple[float, int]:
        driven = ham.time_dependent and ham.is_driven
        if driven:
            period = ham.period
            dt = period / STEPS_PER_PERIOD if self.dt is None else self.dt
            if dt > period / 32 * (1 + 1e-12):
                raise ValueError(f"dt = {dt:g} ns exceeds T/32 = {period / 32:g} ns for the active drive")
            stride = self.stride if self.stride is not None else max(1, int(round(period / dt)))
        else:
            dt = UNDRIVEN_DT if self.dt is None else self.dt
            stride = self.stride if self.stride is not None else 1
        return float(dt), int(stride)

    def halved(self, ham: Hamiltonian) -> "IntegratorConfig":
        dt, stride = self.resolve(ham)
        return replace(self, dt=dt / 2, stride=2 * stride)

    def to_dict(self) -> dict:
        return {"method": self.method, "dt": self.dt, "stride": self.stride}


@dataclass(frozen=True, eq=False)
class Trajectory:
    basis: FockBasis
    times: np.ndarray
    amplitudes: np.ndarray  # (n_samples, dim)

    def __post_init__(self):
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")

    def __len__(self):
        return self.times.size

    def state(self, i: int) -> StateVector:
        return StateVector(self.basis, self.amplitudes[i])

    @property
    def final(self) -> StateVector:
        return self.state(-1)

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.amplitudes, axis=1)


# -- exponential actions --------------------------------------------------------------

def _apply(ham: Hamiltonian, v: np.ndarray, c: float) -> np.ndarray:
    if isinstance(ham, LabHamiltonian):
        out = ham.static @ v
        if c != 0.0 and ham.is_driven:
            diag = c * ham.drive_diagonal
            out = out + (diag[:, None] * v if v.ndim == 2 else diag * v)
        return out
    return ham.matrix @ v


def _norm_bound(ham: Hamiltonian, c: float) -> float:
    if isinstance(ham, LabHamiltonian):
        return ham.static_norm + abs(c) * ham.drive_norm
    return ham.static_norm


def taylor_expm_action(ham: Hamiltonian, v: np.ndarray, h: float, c: float = 0.0, tol: float = 1e-16) -> np.ndarray:
    """exp(-i H h) v for H = H_static + c * D, by sub-stepped truncated Taylor series.

    The step is split so that each piece has ||H h_sub||_1 <= 1; each piece is
    summed until the next term drops below ``tol`` relative to the running sum.
    """
    nrm = _norm_bound(ham, c) * abs(h)
    n_sub = max(1, int(math.ceil(nrm)))
    hs = h / n_sub
    out = np.asarray(v, dtype=complex)
    for _ in range(n_sub):
        term = out
        acc = out.copy()
        for k in range(1, 60):
            term = (-1j * hs / k) * _apply(ham, term, c)
            acc += term
            tn = np.max(np.abs(term))
            if tn <= tol * max(np.max(np.abs(acc)), 1e-300):
                break
        out = acc
    return out


@lru_cache(maxsize=8)
def _spectrum(ham: EffectiveHamiltonian):
    energies, vectors = np.linalg.eigh(ham.matrix.toarray())
    return energies, vectors


@lru_cache(maxsize=1024)
def _dense_step(ham: LabHamiltonian, dt: float, c: float) -> np.ndarray:
    mat = ham.static.toarray() + np.diag(c * ham.drive_diagonal)
    return la.expm(-1j * dt * mat)


def _exp_step(ham, v, h, c):
    if ham.time_dependent and ham.basis.dim <= DENSE_STEP_MAX_DIM:
        return _dense_step(ham, round(h, 14), round(c, 15)) @ v
    return taylor_expm_action(ham, v, h, c)


_SQRT3 = math.sqrt(3.0)
_CF4_A1, _CF4_A2 = (3 - 2 * _SQRT3) / 12, (3 + 2 * _SQRT3) / 12
_GAUSS = (0.5 - _SQRT3 / 6, 0.5 + _SQRT3 / 6)


def _exponential_pieces(method: str, theta: float, nu: float, h: float):
    """(sub-step, drive coefficient) pairs in the order they act, for a step
    of length h starting at drive phase theta."""
    if method == "piecewise_exponential_midpoint":
        return [(h, math.cos(theta + nu * h / 2))]
    # exp(-i h (a1 H1 + a2 H2)) exp(-i h (a2 H1 + a1 H2)), H_i = H at the Gauss nodes;
    # the static weight of each factor is a1 + a2 = 1/2
    c1, c2 = (math.cos(theta + nu * g * h) for g in _GAUSS)
    return [
        (h / 2, 2 * (_CF4_A2 * c1 + _CF4_A1 * c2)),
        (h / 2, 2 * (_CF4_A1 * c1 + _CF4_A2 * c2)),
    ]


def _exponential_step(ham, v, h, method, theta):
    if not ham.time_dependent:
        return taylor_expm_action(ham, v, h)
    for hs, c in _exponential_pieces(method, theta, ham.nu, h):
        v = _exp_step(ham, v, hs, c)
    return v


def _rk4_step(ham, v, t, h):
    def f(tt, x):
        c = float(ham.modulation(tt)) if ham.time_dependent else 0.0
        return -1j * _apply(ham, x, c)

    n0 = np.linalg.norm(v, axis=0)
    k1 = f(t, v)
    k2 = f(t + h / 2, v + h / 2 * k1)
    k3 = f(t + h / 2, v + h / 2 * k2)
    k4 = f(t + h, v + h * k3)
    out = v + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    n1 = np.linalg.norm(out, axis=0)
    if np.any(np.abs(n1 - n0) > 1e-6 * np.maximum(n0, 1e-300)):
        raise FloatingPointError("RK4 norm drift above 1e-6 in one step; reduce dt")
    return out * np.where(n1 > 0, n0 / np.where(n1 > 0, n1, 1), 1.0)


# -- driver ------------------------------------------------------------------------------

def _sample_plan(t0: float, t1: float, dt: float, stride: int):
    span = t1 - t0
    n_full = int(math.floor(span / dt + 1e-9))
    rem = span - n_full * dt
    if rem < 1e-9 * max(dt, 1.0):
        rem = 0.0
    sample_steps = list(range(0, n_full + 1, stride))
    return n_full, rem, sample_steps


def propagate_array(
    amplitudes: np.ndarray,
    ham: Hamiltonian,
    t0: float,
    t1: float,
    cfg: IntegratorConfig | None = None,
    sample_times: bool = False,
):
    """Propagate raw amplitudes (shape (dim,) or (dim, k)) from t0 to t1.

    Returns the final amplitudes, or ``(times, stack)`` with ``stack`` of shape
    (n_samples, ...) when ``sample_times`` is set.
    """
    cfg = cfg or IntegratorConfig()
    if t1 < t0:
        raise ValueError("t1 must not precede t0")
    v = np.array(amplitudes, dtype=complex)
    if v.shape[0] != ham.basis.dim:
        raise ValueError("state and Hamiltonian live on different bases")
    dt, stride = cfg.resolve(ham)
    n_full, rem, steps = _sample_plan(t0, t1, dt, stride)
    times = [t0 + k * dt for k in steps]
    if rem > 0 or steps[-1] != n_full:
        times.append(t1)
    else:
        times[-1] = t1 if n_full else times[-1]
    times = np.array(times)

    if not ham.time_dependent and cfg.method != "rk4" and ham.basis.dim <= SPECTRAL_MAX_DIM:
        energies, vectors = _spectrum(ham)
        coeff = vectors.conj().T @ v
        if not sample_times:
            phase = np.exp(-1j * (t1 - t0) * energies)
            final = vectors @ (phase * coeff if v.ndim == 1 else phase[:, None] * coeff)
            _check_finite(final)
            return final
        phases = np.exp(-1j * np.outer(times - t0, energies))  # (n_t, n_e)
        if v.ndim == 1:
            stack = (phases * coeff) @ vectors.T
        else:
            stack = np.stack([vectors @ (p[:, None] * coeff) for p in phases])
        _check_finite(stack)
        return times, stack

    # phases on a whole-period grid are computed from the step index so that
    # repeated steps hit the dense-step cache exactly
    aligned_m = None
    if ham.time_dependent and ham.is_driven and cfg.method != "rk4":
        m = ham.period / dt
        if abs(m - round(m)) < 1e-9 and abs(t0 / dt - round(t0 / dt)) < 1e-9:
            aligned_m = int(round(m))
            n0 = int(round(t0 / dt))

    out = [v.copy()] if sample_times else None
    for k in range(n_full):
        t = t0 + k * dt
        if cfg.method == "rk4":
            v = _rk4_step(ham, v, t, dt)
        else:
            if aligned_m is not None:
                theta = 2 * math.pi * ((n0 + k) % aligned_m) / aligned_m
            else:
                theta = _phase(ham, t)
            v = _exponential_step(ham, v, dt, cfg.method, theta)
        if sample_times and (k + 1) % stride == 0:
            out.append(v.copy())
        if (k & 255) == 255:
            _check_finite(v)
    if rem > 0:
        t = t0 + n_full * dt
        if cfg.method == "rk4":
            v = _rk4_step(ham, v, t, rem)
        else:
            v = _exponential_step(ham, v, rem, cfg.method, _phase(ham, t))
        if sample_times:
            out.append(v.copy())
    elif sample_times and steps[-1] != n_full:
        out.append(v.copy())
    _check_finite(v)
    if sample_times:
        return times, np.array(out)
    return v


def spectral_columns(ham, vectors: np.ndarray, durations, cfg: IntegratorConfig | None = None):
    """Column k of ``vectors`` evolved for ``durations[k]`` under a static Hamiltonian, or None.

    Two dense products in the eigenbasis replace one propagation per column.
    Returns None when the spectral route does not apply (time-dependent
    Hamiltonian, RK4 requested, or dimension above SPECTRAL_MAX_DIM).
    """
    cfg = cfg or IntegratorConfig()
    if ham.time_dependent or cfg.method == "rk4" or ham.basis.dim > SPECTRAL_MAX_DIM:
        return None
    energies, basis = _spectrum(ham)
    durations = np.asarray(durations, dtype=float)
    coeff = basis.conj().T @ np.asarray(vectors, dtype=complex)
    out = basis @ (np.exp(-1j * np.outer(energies, durations)) * coeff)
    _check_finite(out)
    return out


def _phase(ham, t):
    return ham.nu * t if ham.time_dependent else 0.0


def _check_finite(v):
    if not np.all(np.isfinite(v)):
        raise FloatingPointError("non-finite amplitudes: integration is unstable")


def evolve(
    state: StateVector,
    ham: Hamiltonian,
    t0: float,
    t1: float,
    cfg: IntegratorConfig | None = None,
) -> Trajectory:
    """Integrate from t0 to t1, sampling every ``cfg.stride`` steps and at t1."""
    if not state.basis.same_as(ham.basis):
        raise ValueError("state and Hamiltonian live on different bases")
    if t1 == t0:
        return Trajectory(state.basis, np.array([t0]), state.amplitudes[None, :].copy())
    times, stack = propagate_array(state.amplitudes, ham, t0, t1, cfg, sample_times=True)
    norms = np.linalg.norm(stack, axis=1)
    if np.max(np.abs(norms - 1.0)) > NORM_TOLERANCE:
        raise FloatingPointError(f"norm drift {np.max(np.abs(norms - 1.0)):.2e} exceeds {NORM_TOLERANCE:g}")
    return Trajectory(state.basis, times, stack)


def propagate(state: StateVector, ham: Hamiltonian, duration: float, cfg: IntegratorConfig | None = None) -> StateVector:
    """Final state after ``duration`` ns starting at drive phase zero."""
    if duration == 0:
        return state
    return StateVector(state.basis, propagate_array(state.amplitudes, ham, 0.0, duration, cfg))


def echo_fidelity(a: StateVector, b: StateVector) -> float:
    """|<a|b>|^2."""
    if not a.basis.same_as(b.basis):
        raise ValueError("basis mismatch")
    return float(min(1.0, abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2))


def step_halving_drift(run: Callable[[IntegratorConfig], np.ndarray], cfg: IntegratorConfig, ham: Hamiltonian) -> float:
    """Max |obs(dt) - obs(dt/2)| for an observable-producing callable."""
    coarse = np.asarray(run(cfg))
    fine = np.asarray(run(cfg.halved(ham)))
    if coarse.shape != fine.shape:
        raise ValueError("observable shapes differ between dt and dt/2 runs")
    return float(np.max(np.abs(coarse - fine))) if coarse.size else 0.0


def check_step_halving(run, cfg, ham, tol: float = 1e-4) -> float:
    drift = step_halving_drift(run, cfg, ham)
    if not drift < tol:
        raise ConvergenceError(f"step-halving drift {drift:.3e} exceeds {tol:g}")
    return drift
