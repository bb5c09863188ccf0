"""Experiment sequences: Rabi calibration, quantum walks, reversed evolution, OTOCs, SSH quench.

Sites are 0-based in arguments and 1-based in result labels. Every drive
segment starts at drive phase zero.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import NamedTuple, Sequence

import numpy as np
from scipy.optimize import brentq

from . import freefermion
from .analysis.fitting import FitResult, bessel_scale_fit, fit_velocity
from .analysis.fronts import FrontScan, front_times
from .analysis.spectral import dominant_frequency
from .bessel import bessel_j0
from .hamiltonian import (
    build_effective_hamiltonian,
    build_lab_hamiltonian,
    effective_couplings,
)
from .model import (
    DeviceSpec,
    DrivePattern,
    FockBasis,
    Gate,
    Schedule,
    StateVector,
    build_basis,
    embed_local,
    plus_product_state,
    product_state,
    site_operator,
    site_populations,
)
from .propagator import (
    STEPS_PER_PERIOD,
    IntegratorConfig,
    check_step_halving,
    propagate_array,
    spectral_columns,
)

FRAMES = ("lab", "effective")
SOLVERS = ("auto", "many_body", "free_fermion")
DEFAULT_OTOC_GRID = np.arange(0.0, 250.0 + 1e-9, 2.0)
REVERSAL_TOLERANCE = 1e-3
#: largest chain the automatic solver choice still treats with the many-body basis
MANY_BODY_MAX_SITES = 12
#: cap on dim * columns when propagating many states at once
COLUMN_BLOCK_ELEMENTS = 4_000_000


# -- result types -----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Site-resolved samples: ``values[i, k]`` at ``times[i]`` for site label ``labels[k]``."""

    times: np.ndarray
    values: np.ndarray
    labels: tuple
    quantity: str = "P1"

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if values.shape != (times.size, len(self.labels)):
            raise ValueError(f"values shape {values.shape} does not match {times.size} times x {len(self.labels)} sites")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "labels", tuple(int(x) for x in self.labels))

    @property
    def n_sites(self) -> int:
        return len(self.labels)

    def column(self, label: int) -> np.ndarray:
        """Samples of the site with 1-based ``label``."""
        return self.values[:, self.labels.index(label)]


@dataclass(frozen=True, eq=False)
class WalkResult:
    populations: TimeSeries
    initial: tuple
    metadata: dict
    level2: TimeSeries | None = None
    echo_fidelity: float | None = None
    edge_average: float | None = None
    halving_drift: float | None = None

    def __post_init__(self):
        if self.metadata.get("levels", 2) == 2:
            total = self.populations.values.sum(axis=1)
            n_exc = sum(self.initial)
            if np.max(np.abs(total - n_exc)) > 1e-6:
                raise AssertionError(f"excitation number drifted from {n_exc} by {np.max(np.abs(total - n_exc)):.2e}")


@dataclass(frozen=True, eq=False)
class OtocGrid:
    """C_j(t) on a (time x site) grid. Invalid rows (empty post-selection) hold NaN."""

    times: np.ndarray
    values: np.ndarray
    butterfly: str
    metadata: dict
    valid: np.ndarray
    kept_fraction: np.ndarray
    halving_drift: float | None = None

    @property
    def labels(self) -> tuple:
        return tuple(range(1, self.values.shape[1] + 1))

    def as_series(self) -> TimeSeries:
        return TimeSeries(self.times, self.values, self.labels, f"C_{self.butterfly}{self.butterfly}")

    def invariant_violations(self) -> list:
        """Checks C(0, j) = 1 and, for exact two-level runs, |C| <= 1."""
        problems = []
        at_zero = np.flatnonzero(np.isclose(self.times, 0.0))
        if at_zero.size and self.valid[at_zero[0]]:
            dev = float(np.max(np.abs(self.values[at_zero[0]] - 1.0)))
            if dev > 1e-9:
                problems.append(f"C(0, j) deviates from 1 by {dev:.2e}")
        if self.metadata.get("levels") == 2:
            worst = float(np.nanmax(np.abs(self.values))) if self.valid.any() else 0.0
            if worst > 1 + 1e-9:
                problems.append(f"|C| reaches {worst:.12f} > 1")
        return problems


# -- model selection --------------------------------------------------------------------

@dataclass(frozen=True)
class ModelOptions:
    """Which Hamiltonian a protocol runs.

    ``frame="lab"`` integrates the driven Bose-Hubbard chain with ``levels``
    local states; ``frame="effective"`` uses the static XY model (two levels
    only). ``include_nnn`` keeps the device's next-nearest-neighbour hopping
    (renormalised in the effective frame); ``include_zz`` adds the effective
    ZZ term, which the lab frame produces on its own through level 2.
    """

    frame: str = "effective"
    levels: int = 2
    include_nnn: bool = False
    include_zz: bool = False
    zz_strength: float = 0.065

    def __post_init__(self):
        if self.frame not in FRAMES:
            raise ValueError(f"frame must be one of {FRAMES}")
        if self.levels not in (2, 3):
            raise ValueError(f"levels must be 2 or 3, got {self.levels}")
        if self.frame == "effective" and self.levels != 2:
            raise ValueError("the effective model is two-level; use frame='lab' for levels=3")
        if self.frame == "lab" and self.include_zz:
            raise ValueError("the ZZ term is an effective-model correction; the lab frame has level 2 instead")

    def to_dict(self) -> dict:
        return {
            "frame": self.frame, "levels": self.levels, "include_nnn": self.include_nnn,
            "include_zz": self.include_zz, "zz_strength": self.zz_strength if self.include_zz else None,
        }


def model_device(device: DeviceSpec, options: ModelOptions) -> DeviceSpec:
    dev = device.with_levels(options.levels)
    return dev if options.include_nnn else dev.without_nnn()


def build_hamiltonian(device: DeviceSpec, drive: DrivePattern, options: ModelOptions, basis: FockBasis):
    dev = model_device(device, options)
    if options.frame == "lab":
        return build_lab_hamiltonian(dev, drive, basis=basis)
    return build_effective_hamiltonian(dev, drive, options.include_nnn, options.include_zz,
                                       options.zz_strength, basis=basis)


def sampling_config(cfg: IntegratorConfig | None, period: float, samples_per_period: int) -> IntegratorConfig:
    """Integrator settings whose sample stride lands on ``period / samples_per_period``.

    Unless overridden, dt = period / 64 whether or not the drive is on, so
    driven and undriven runs share one sample grid.
    """
    cfg = cfg or IntegratorConfig()
    dt = cfg.dt if cfg.dt is not None else period / STEPS_PER_PERIOD
    ratio = period / samples_per_period / dt
    if abs(ratio - round(ratio)) > 1e-6 or round(ratio) < 1:
        raise ValueError(f"dt = {dt:g} ns does not divide the sample interval {period / samples_per_period:g} ns")
    return replace(cfg, dt=dt, stride=int(round(ratio)))


def _run_checked(run, cfg, ham, check: bool):
    """``run(cfg) -> (result, observable)``; returns (result, step-halving drift or None)."""
    if not check:
        return run(cfg)[0], None
    first = []

    def observable(c):
        res, obs = run(c)
        first.append(res)
        return obs

    drift = check_step_halving(observable, cfg, ham)
    return first[0], drift


# -- gates ------------------------------------------------------------------------------

def gate_matrix(kind: str, levels: int, eta: float = 1.0) -> np.ndarray:
    """Single-site gate in occupation order; level 2 is left alone unless ``kind`` is SigmaX."""
    m = np.eye(levels, dtype=complex)
    if kind == "X":
        m[:2, :2] = [[0, 1], [1, 0]]
    elif kind == "Z":
        m[1, 1] = -1
    elif kind == "Y_half_pi":
        m[:2, :2] = np.array([[1, -1], [1, 1]]) / math.sqrt(2)
    elif kind == "SigmaX":
        if levels != 3:
            raise ValueError("SigmaX is a three-level gate; use X for two levels")
        if not math.isclose(abs(eta), 1.0):
            raise ValueError("SigmaX is only unitary for |eta| = 1 (eta = 0 is a measurement operator)")
        m[:2, :2] = [[0, 1], [1, 0]]
        m[2, 2] = eta
    else:
        raise ValueError(f"unknown gate kind {kind!r}")
    return m


def apply_gate(state: StateVector, site: int, kind: str, eta: float = 1.0) -> StateVector:
    op = embed_local(state.basis, site, gate_matrix(kind, state.basis.levels, eta))
    return StateVector(state.basis, op.matrix @ state.amplitudes)


def _gate_operator(basis: FockBasis, site: int, kind: str, eta: float = 1.0):
    return embed_local(basis, site, gate_matrix(kind, basis.levels, eta)).matrix


# -- propagation helpers ----------------------------------------------------------------

def states_at(vector: np.ndarray, ham, times: Sequence[float], cfg: IntegratorConfig) -> np.ndarray:
    """ψ(t) for each t (sorted, >= 0) starting from ``vector`` at segment time 0; shape (dim, n_t)."""
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0) or (times.size and times[0] < 0):
        raise ValueError("times must be sorted and non-negative")
    fast = spectral_columns(ham, np.repeat(np.asarray(vector, complex)[:, None], times.size, axis=1), times, cfg)
    if fast is not None:
        return fast
    out = np.empty((vector.size, times.size), dtype=complex)
    v, t = np.asarray(vector, dtype=complex), 0.0
    for i, target in enumerate(times):
        if target > t:
            v = propagate_array(v, ham, t, target, cfg)
            t = target
        out[:, i] = v
    return out


def propagate_each(vectors: np.ndarray, ham, durations: Sequence[float], cfg: IntegratorConfig) -> np.ndarray:
    """Column k of ``vectors`` evolved from segment time 0 to ``durations[k]``.

    Columns advance together and drop out once their duration is reached, so
    the cost is that of the longest run on a shrinking block.
    """
    durations = np.asarray(durations, dtype=float)
    fast = spectral_columns(ham, vectors, durations, cfg)
    if fast is not None:
        return fast
    dim, n = vectors.shape
    out = np.empty_like(vectors, dtype=complex)
    order = np.argsort(durations, kind="stable")
    block = max(1, COLUMN_BLOCK_ELEMENTS // max(dim, 1))
    for start in range(0, n, block):
        idx = order[start:start + block]
        cur = np.array(vectors[:, idx], dtype=complex)
        t = 0.0
        for pos, col in enumerate(idx):
            target = durations[col]
            if target > t:
                cur[:, pos:] = propagate_array(cur[:, pos:], ham, t, target, cfg)
                t = target
            out[:, col] = cur[:, pos]
    return out


def _initial_occupation(initial, n_sites: int) -> tuple:
    occ = tuple(int(c) for c in initial) if isinstance(initial, str) else tuple(int(x) for x in initial)
    if len(occ) != n_sites:
        raise ValueError(f"initial occupation has {len(occ)} sites, device has {n_sites}")
    return occ


def neel_occupation(n_sites: int, first: int = 0) -> tuple:
    """Alternating 0/1 occupation starting with ``first`` on site 1."""
    return tuple((first + k) % 2 for k in range(n_sites))


# -- Rabi calibration -------------------------------------------------------------------

def run_rabi_pair(device: DeviceSpec, eps: float, t_max: float = 2000.0, nu: float = 120.0,
                  cfg: IntegratorConfig | None = None, samples_per_period: int = 1,
                  check_halving: bool = False, return_drift: bool = False):
    """Q1 driven at amplitude ``eps``, Q2 idle, starting from |01>; lab frame, stroboscopic samples.

    Uses the first two sites of ``device`` with its level count. Column 0 of
    the result is P_1(t). With ``return_drift`` the step-halving drift (None
    unless ``check_halving``) comes back as a second value.
    """
    if eps < 0:
        raise ValueError("eps must be non-negative")
    pair = device.subchain(0, 2) if device.n_sites > 2 else device
    basis = build_basis(2, pair.levels, 1)
    drive = DrivePattern([eps, 0.0], nu)
    ham = build_lab_hamiltonian(pair, drive, basis=basis)
    cfg = sampling_config(cfg, drive.period, samples_per_period)
    psi = product_state(basis, (0, 1))

    def run(c):
        times, stack = propagate_array(psi.amplitudes, ham, 0.0, t_max, c, sample_times=True)
        pops = site_populations(basis, stack.T, 1).T
        return TimeSeries(times, pops, (1, 2)), pops

    series, drift = _run_checked(run, cfg, ham, check_halving)
    return series if not return_drift else (series, drift)


class RabiSweep(NamedTuple):
    eps: np.ndarray
    frequency: np.ndarray  # MHz, oscillation of P_1
    g_eff: np.ndarray  # MHz, |g_eff| = frequency / 2
    confident: np.ndarray
    fit: FitResult | None  # scale g of |g_eff| = g |J0(eps / nu)| on the confident points
    halving_drift: float | None = None  # worst over the sweep


def run_rabi_sweep(device: DeviceSpec, eps_values: Sequence[float], t_max: float = 2000.0,
                   nu: float = 120.0, cfg: IntegratorConfig | None = None,
                   check_halving: bool = False) -> RabiSweep:
    """Extract |g_eff(eps)| from the Rabi frequency at each amplitude.

    The frequency only fixes the magnitude of the coupling, so the Bessel
    scale is fitted to |J0|.
    """
    eps = np.asarray(eps_values, dtype=float)
    freq, conf = np.empty_like(eps), np.empty(eps.size, dtype=bool)
    drifts = []
    for k, e in enumerate(eps):
        series, drift = run_rabi_pair(device, e, t_max, nu, cfg, check_halving=check_halving, return_drift=True)
        if drift is not None:
            drifts.append(drift)
        est = dominant_frequency(series.times, series.column(1))
        freq[k], conf[k] = est.frequency, est.confident
    g_eff = freq / 2.0
    # restore the sign the frequency cannot see, then fit the signed law
    signed = g_eff * np.sign(bessel_j0(eps / nu))
    fit = bessel_scale_fit(eps[conf], signed[conf], nu) if conf.any() else None
    return RabiSweep(eps, freq, g_eff, conf, fit, max(drifts) if drifts else None)


# -- quantum walks ----------------------------------------------------------------------

def _free_fermion_ok(options: ModelOptions, n_exc: int, butterfly: str | None = None) -> bool:
    if options.frame != "effective" or options.include_zz:
        return False
    if butterfly is None:
        return n_exc == 1
    return butterfly == "Z" and not options.include_nnn


def _pick_solver(solver: str, applicable: bool, n_sites: int) -> str:
    if solver not in SOLVERS:
        raise ValueError(f"solver must be one of {SOLVERS}")
    if solver == "free_fermion" and not applicable:
        raise ValueError("the free-fermion route needs the effective model without ZZ "
                         "(one excitation, or a Z butterfly without NNN)")
    if solver == "auto":
        return "free_fermion" if applicable and n_sites > MANY_BODY_MAX_SITES else "many_body"
    return solver


def run_quantum_walk(device: DeviceSpec, drive: DrivePattern, initial, t_max: float = 250.0,
                     options: ModelOptions | None = None, cfg: IntegratorConfig | None = None,
                     samples_per_period: int = 4, solver: str = "auto",
                     check_halving: bool = False) -> WalkResult:
    """Site populations P_j(t) from a product state on a uniform grid of period / samples_per_period."""
    options = options or ModelOptions()
    occ = _initial_occupation(initial, device.n_sites)
    n_exc = sum(occ)
    solver = _pick_solver(solver, _free_fermion_ok(options, n_exc), device.n_sites)
    cfg = sampling_config(cfg, drive.period, samples_per_period)
    meta = {
        "protocol": "walk", "drive": drive.amplitudes.tolist(), "drive_frequency": drive.drive_frequency,
        "initial": "".join(map(str, occ)), "solver": solver, "t_max": t_max, **options.to_dict(),
    }
    labels = tuple(range(1, device.n_sites + 1))

    if solver == "free_fermion":
        dev = model_device(device, options)
        g_nn, g_nnn = effective_couplings(dev, drive, options.include_nnn)
        step = cfg.dt * cfg.stride
        times = np.arange(0.0, t_max + 1e-9 * step, step)
        if times[-1] < t_max - 1e-9:
            times = np.append(times, t_max)
        pops = freefermion.single_particle_walk(g_nn, occ.index(1), times,
                                                g_nnn if options.include_nnn else None)
        return WalkResult(TimeSeries(times, pops, labels), occ, meta)

    basis = build_basis(device.n_sites, options.levels, n_exc)
    ham = build_hamiltonian(device, drive, options, basis)
    psi = product_state(basis, occ)

    def run(c):
        times, stack = propagate_array(psi.amplitudes, ham, 0.0, t_max, c, sample_times=True)
        p1 = site_populations(basis, stack.T, 1).T
        p2 = site_populations(basis, stack.T, 2).T if options.levels == 3 else None
        obs = p1 if p2 is None else np.hstack([p1, p2])
        return (times, p1, p2), obs

    (times, p1, p2), drift = _run_checked(run, cfg, ham, check_halving)
    level2 = TimeSeries(times, p2, labels, "P2") if p2 is not None else None
    if options.levels == 3:
        p1 = p1 + 2 * p2  # mean occupation keeps the excitation count
        meta["quantity"] = "mean occupation"
    return WalkResult(TimeSeries(times, p1, labels, "n" if options.levels == 3 else "P1"), occ, meta,
                      level2=level2, halving_drift=drift)


class _DriveClock:
    """Minimal stand-in exposing what IntegratorConfig.resolve needs."""

    time_dependent = True

    def __init__(self, drive: DrivePattern):
        self.is_driven = drive.is_active
        self.period = drive.period


# -- reversed evolution -----------------------------------------------------------------

def reversal_mismatch(eps_a: float, eps_b: float, nu: float = 120.0) -> float:
    """|J0(eps_a/nu) + J0(eps_b/nu)|: zero for a perfect sign flip of every staggered bond."""
    return abs(bessel_j0(eps_a / nu) + bessel_j0(eps_b / nu))


def reversal_partner(eps_a: float, nu: float = 120.0) -> float:
    """The eps_b beyond the first J0 zero with J0(eps_b/nu) = -J0(eps_a/nu) exactly.

    Searched on the rising side of the second lobe, between the first zero of J0
    and the minimum of J0 near x = 3.83.
    """
    target = -bessel_j0(eps_a / nu)
    lo, hi = 2.404825557695773, 3.831705970207512
    if not bessel_j0(hi) <= target <= 0.0:
        raise ValueError(f"no sign-flipping partner for eps_a = {eps_a} MHz on the second lobe")
    return nu * brentq(lambda x: bessel_j0(x) - target, lo, hi, xtol=1e-14)


def _check_reversal(eps_a: float, eps_b: float, nu: float) -> float:
    mismatch = reversal_mismatch(eps_a, eps_b, nu)
    if mismatch > REVERSAL_TOLERANCE:
        warnings.warn(f"J0(eps_a/nu) + J0(eps_b/nu) = {mismatch:.2e}: the backward leg does not "
                      "reverse the forward one", stacklevel=3)
    return mismatch


def run_reversed_evolution(device: DeviceSpec, eps_a: float = 213.6, eps_b: float = 400.0,
                           half_time: float = 125.0, options: ModelOptions | None = None,
                           nu: float = 120.0, initial=None, cfg: IntegratorConfig | None = None,
                           samples_per_period: int = 1, check_halving: bool = False) -> WalkResult:
    """Néel state, staggered drive eps_a for ``half_time``, then eps_b for ``half_time``.

    Returns P_j(t) on [0, 2 half_time], level-2 populations for three levels,
    and the echo fidelity |<psi(0)|psi(2 half_time)>|^2.
    """
    options = options or ModelOptions()
    occ = _initial_occupation(initial if initial is not None else neel_occupation(device.n_sites, 1),
                              device.n_sites)
    mismatch = _check_reversal(eps_a, eps_b, nu)
    drive_a = DrivePattern.staggered(device.n_sites, eps_a, nu)
    drive_b = DrivePattern.staggered(device.n_sites, eps_b, nu)
    basis = build_basis(device.n_sites, options.levels, sum(occ))
    ham_a = build_hamiltonian(device, drive_a, options, basis)
    ham_b = build_hamiltonian(device, drive_b, options, basis)
    psi = product_state(basis, occ)
    cfg = sampling_config(cfg, drive_a.period, samples_per_period)
    ref = ham_a if ham_a.time_dependent else _DriveClock(drive_a)

    def run(c):
        t1, s1 = propagate_array(psi.amplitudes, ham_a, 0.0, half_time, c, sample_times=True)
        t2, s2 = propagate_array(s1[-1], ham_b, 0.0, half_time, c, sample_times=True)
        times = np.concatenate([t1, half_time + t2[1:]])
        stack = np.vstack([s1, s2[1:]])
        p1 = site_populations(basis, stack.T, 1).T
        p2 = site_populations(basis, stack.T, 2).T if options.levels == 3 else np.zeros_like(p1)
        fid = float(min(1.0, abs(np.vdot(psi.amplitudes, stack[-1])) ** 2))
        return (times, p1, p2, fid), np.hstack([p1, p2])

    (times, p1, p2, fid), drift = _run_checked(run, cfg, ref, check_halving)
    labels = tuple(range(1, device.n_sites + 1))
    meta = {
        "protocol": "reverse", "eps_a": eps_a, "eps_b": eps_b, "drive_frequency": nu,
        "half_time": half_time, "initial": "".join(map(str, occ)), "reversal_mismatch": mismatch,
        **options.to_dict(),
    }
    return WalkResult(
        TimeSeries(times, p1, labels), occ, meta,
        level2=TimeSeries(times, p2, labels, "P2") if options.levels == 3 else None,
        echo_fidelity=fid, halving_drift=drift,
    )


def reversal_asymmetry(walk: WalkResult) -> float:
    """Mean |P_j(t) - P_j(2 T_half - t)| over the grid, which must be symmetric about T_half."""
    p = walk.populations.values
    times = walk.populations.times
    if not np.allclose(times + times[::-1], times[0] + times[-1], atol=1e-6):
        raise ValueError("sample grid is not symmetric about the reversal time")
    return float(np.mean(np.abs(p - p[::-1])))


# -- OTOCs ------------------------------------------------------------------------------

def _otoc_measure_z(basis: FockBasis, finals: np.ndarray, lam: np.ndarray, post_select: bool):
    probs = np.abs(finals) ** 2
    qubit = np.all(basis.occupations <= 1, axis=1)
    if post_select and basis.levels == 3:
        probs = probs * qubit[:, None]
    kept = probs.sum(axis=0)
    valid = kept > 1e-12
    p1 = ((basis.occupations == 1).astype(float).T @ (probs / np.where(valid, kept, 1.0))).T
    values = lam * (2.0 * p1 - 1.0)
    values[~valid] = np.nan
    return values, valid, kept


def _otoc_measure_x(basis: FockBasis, finals: np.ndarray):
    values = np.empty((finals.shape[1], basis.n_sites))
    for j in range(basis.n_sites):
        # sx on the two lowest levels, zero on level 2: the eta = 0 measurement operator
        op = site_operator(basis, j, "sx")
        values[:, j] = np.real(np.sum(finals.conj() * (op.matrix @ finals), axis=0))
    kept = np.sum(np.abs(finals) ** 2, axis=0)
    return values, np.ones(finals.shape[1], dtype=bool), kept


def run_otoc(device: DeviceSpec, eps_a: float = 213.6, eps_b: float = 400.0, butterfly: str = "Z",
             t_grid: Sequence[float] | None = None, options: ModelOptions | None = None,
             nu: float = 120.0, cfg: IntegratorConfig | None = None, reference: str = "drive",
             post_select: bool = True, solver: str = "auto", check_halving: bool = False) -> OtocGrid:
    """OTOC C_j(t) with the butterfly on the last site.

    For each t: evolve under the staggered eps_a drive for t, apply the Z (or X)
    gate on the last site, evolve under eps_b for t, measure every site. Z runs
    start from |0101...> and report lambda_j <sz_j>, with lambda_j the sz
    eigenvalue of the initial state; X runs start from |+...+> and report <sx_j>.
    With three levels the X gate is SigmaX(eta=1) and the measurement is sx on
    the qubit levels; Z runs are projected onto the initial number sector with
    no level-2 occupation and renormalised (``post_select``).
    ``reference="exact"`` replaces the backward leg by exact -H (effective frame only).
    """
    options = options or ModelOptions()
    butterfly = butterfly.upper()
    if butterfly not in ("Z", "X"):
        raise ValueError("butterfly must be 'Z' or 'X'")
    if reference not in ("drive", "exact"):
        raise ValueError("reference must be 'drive' or 'exact'")
    if reference == "exact" and options.frame != "effective":
        raise ValueError("the exact -H reference exists only for the effective model")
    times = np.asarray(DEFAULT_OTOC_GRID if t_grid is None else t_grid, dtype=float)
    if times.ndim != 1 or times.size == 0 or np.any(times < 0) or np.any(np.diff(times) <= 0):
        raise ValueError("t_grid must be a strictly increasing list of non-negative times")
    mismatch = _check_reversal(eps_a, eps_b, nu) if reference == "drive" else 0.0
    n = device.n_sites
    drive_a = DrivePattern.staggered(n, eps_a, nu)
    drive_b = DrivePattern.staggered(n, eps_b, nu)
    meta = {
        "protocol": "otoc", "butterfly": butterfly, "eps_a": eps_a, "eps_b": eps_b, "drive_frequency": nu,
        "reference": reference, "reversal_mismatch": mismatch,
        "post_selection": bool(post_select and butterfly == "Z" and options.levels == 3),
        **options.to_dict(),
    }
    occ = neel_occupation(n, 0)
    lam = 2.0 * np.array(occ, dtype=float) - 1.0
    solver = _pick_solver(solver, _free_fermion_ok(options, sum(occ), butterfly), n)
    meta["solver"] = solver

    if solver == "free_fermion":
        dev = model_device(device, options)
        g_a, _ = effective_couplings(dev, drive_a)
        g_b = None if reference == "exact" else effective_couplings(dev, drive_b)[0]
        values = freefermion.zz_otoc(g_a, times, occ, g_b)
        ones = np.ones(times.size)
        return OtocGrid(times, values, butterfly, meta, ones.astype(bool), ones)

    if butterfly == "Z":
        basis = build_basis(n, options.levels, sum(occ))
        psi = product_state(basis, occ)
        gate = _gate_operator(basis, n - 1, "Z")
    else:
        basis = build_basis(n, options.levels)
        psi = plus_product_state(basis)
        gate = _gate_operator(basis, n - 1, "SigmaX" if options.levels == 3 else "X")
    ham_a = build_hamiltonian(device, drive_a, options, basis)
    ham_b = ham_a.negated() if reference == "exact" else build_hamiltonian(device, drive_b, options, basis)
    cfg = sampling_config(cfg, drive_a.period, 1)
    ref = ham_a if ham_a.time_dependent else _DriveClock(drive_a)

    def run(c):
        forward = states_at(psi.amplitudes, ham_a, times, c)
        finals = propagate_each(gate @ forward, ham_b, times, c)
        if butterfly == "Z":
            out = _otoc_measure_z(basis, finals, lam, post_select)
        else:
            out = _otoc_measure_x(basis, finals)
        return out, np.nan_to_num(out[0], nan=0.0)

    (values, valid, kept), drift = _run_checked(run, cfg, ref, check_halving)
    if not valid.all():
        warnings.warn(f"{np.count_nonzero(~valid)} grid points have empty post-selection support "
                      "and are marked invalid", stacklevel=2)
    return OtocGrid(times, values, butterfly, meta, valid, kept, drift)


def otoc_front_velocity(grid: OtocGrid, distances: Sequence[int] = tuple(range(1, 10)),
                        threshold: float = 0.5, degree: int = 6) -> tuple[FitResult, FrontScan]:
    """Light-cone velocity from threshold crossings at the given distances from the butterfly."""
    n = grid.values.shape[1]
    cols = [n - 1 - d for d in distances]
    if min(cols) < 0:
        raise ValueError("distance exceeds the chain")
    rows = grid.valid
    scan = front_times(grid.times[rows], grid.values[rows][:, cols], list(distances),
                       mode="polynomial_otoc", threshold=threshold, degree=degree, min_sites=3)
    return fit_velocity(scan.points), scan


def walk_front_velocity(walk: WalkResult, distances: Sequence[int] = (1, 2, 3, 4, 5),
                        source: int | None = None) -> tuple[FitResult, FrontScan]:
    """Light-cone velocity from Gaussian fronts of P_j at the given distances from the source.

    The source defaults to the initially excited site; sites on its right are used.
    """
    src = walk.initial.index(1) if source is None else source
    cols = [src + d for d in distances]
    if max(cols) >= walk.populations.n_sites:
        raise ValueError("distance exceeds the chain")
    scan = front_times(walk.populations.times, walk.populations.values[:, cols], list(distances), min_sites=3)
    return fit_velocity(scan.points), scan


# -- SSH --------------------------------------------------------------------------------

def run_ssh_quench(device: DeviceSpec, drive: DrivePattern, t_max: float = 250.0,
                   options: ModelOptions | None = None, cfg: IntegratorConfig | None = None,
                   samples_per_period: int = 4, check_halving: bool = False) -> WalkResult:
    """Single excitation on site 1; adds the edge population P_1 averaged over [t_max/2, t_max]."""
    options = options or ModelOptions()
    if device.n_sites % 2:
        raise ValueError("the SSH picture needs an even number of sites")
    occ = tuple([1] + [0] * (device.n_sites - 1))
    walk = run_quantum_walk(device, drive, occ, t_max, options, cfg, samples_per_period,
                            solver="many_body", check_halving=check_halving)
    times = walk.populations.times
    mask = times >= t_max / 2 - 1e-9
    edge = float(np.mean(walk.populations.values[mask, 0]))
    meta = dict(walk.metadata, protocol="ssh")
    return replace(walk, metadata=meta, edge_average=edge)


def ssh_pattern(kind: str, n_sites: int = 10, eps: float = 156.0, nu: float = 120.0) -> DrivePattern:
    """The two drive layouts of the SSH demonstration: 'trivial' or 'nontrivial'."""
    layouts = {"trivial": (3, 4, 7, 8), "nontrivial": (2, 3, 6, 7, 9)}
    if kind not in layouts:
        raise ValueError(f"kind must be one of {sorted(layouts)}")
    return DrivePattern.on_sites(n_sites, [s for s in layouts[kind] if s <= n_sites], eps, nu)


# -- generic schedules ------------------------------------------------------------------

def run_schedule(state: StateVector, device: DeviceSpec, schedule: Schedule,
                 options: ModelOptions | None = None, cfg: IntegratorConfig | None = None) -> StateVector:
    """Apply a piecewise drive schedule with instantaneous gates; returns the final state.

    Gates are applied in time order (list order for ties). A gate on a
    segment boundary acts before the next segment starts.
    """
    options = options or ModelOptions()
    v = np.array(state.amplitudes)
    gates = sorted(enumerate(schedule.gates), key=lambda ig: (ig[1].time, ig[0]))
    gi = 0
    start = 0.0
    for k, (duration, drive) in enumerate(schedule.segments):
        ham = build_hamiltonian(device, drive, options, state.basis)
        end = start + duration
        last = k == len(schedule.segments) - 1
        local = 0.0
        while gi < len(gates) and (gates[gi][1].time < end - 1e-12 or (last and gates[gi][1].time <= end + 1e-9)):
            gate: Gate = gates[gi][1]
            when = max(gate.time - start, 0.0)
            if when > local:
                v = propagate_array(v, ham, local, when, cfg)
                local = when
            v = _gate_operator(state.basis, gate.site, gate.kind, gate.eta) @ v
            gi += 1
        if duration > local:
            v = propagate_array(v, ham, local, duration, cfg)
        start = end
    return StateVector(state.basis, v)
