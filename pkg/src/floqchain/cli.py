"""Command-line front end: ``floqchain <experiment> [flags]``.

Each run writes ``<kind>.csv`` (long format, ``time_ns,site,value`` for time
series), ``<kind>.json`` (summary) and ``timing.json`` into the output
directory. The first two are byte-identical for identical configurations;
wall-clock time lives only in ``timing.json``.
"""
from __future__ import annotations

import argparse
import io
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    ConfusionModel,
    FitError,
    calibrate_counts,
    front_times,
    fit_velocity,
    post_select,
    recurrence_correlation,
    sample_shots,
)
from .bessel import bessel_j0
from .config import (
    FORMAT_VERSION,
    KINDS,
    ConfigError,
    ExperimentConfig,
    load_config,
    parse_config,
    resolve_device,
)
from .model import DrivePattern, StateVector, build_basis, product_state
from .propagator import STEPS_PER_PERIOD, ConvergenceError, IntegratorConfig
from .protocols import (
    ModelOptions,
    build_hamiltonian,
    otoc_front_velocity,
    reversal_asymmetry,
    run_otoc,
    run_quantum_walk,
    run_rabi_sweep,
    run_reversed_evolution,
    run_ssh_quench,
    sampling_config,
    ssh_pattern,
    states_at,
    walk_front_velocity,
)

EXIT_CONFIG = 2
EXIT_INVARIANT = 3

RECURRENCE_WINDOW = 500.0  # ns


class InvariantViolation(RuntimeError):
    pass


# -- output -----------------------------------------------------------------------------

def _num(x) -> str:
    return "nan" if not np.isfinite(x) else f"{float(x):.12g}"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if np.isfinite(obj) else None
    return obj


class Writer:
    """Writes CSV and JSON files that carry the version, canonical config and integrator."""

    def __init__(self, config: ExperimentConfig, integrator: dict):
        self.config = config
        self.integrator = integrator
        self.out = Path(config["output.dir"])
        self.files: list[Path] = []
        self.device = resolve_device(config["device.source"], config["device.levels"]).to_dict()

    def _preamble(self) -> str:
        lines = [f"floqchain {__version__} format {FORMAT_VERSION}",
                 "integrator " + json.dumps(self.integrator, sort_keys=True),
                 "device " + json.dumps(_jsonable(self.device), sort_keys=True),
                 "config:"] + self.config.canonical().splitlines()
        return "".join(f"# {line}\n" for line in lines)

    def csv(self, name: str, header: str, rows) -> Path:
        buf = io.StringIO()
        buf.write(self._preamble())
        buf.write(header + "\n")
        for row in rows:
            buf.write(",".join(v if isinstance(v, str) else _num(v) for v in row) + "\n")
        return self._write(name, buf.getvalue())

    def series(self, name: str, times, values, labels) -> Path:
        rows = ((t, str(lab), v) for i, t in enumerate(times) for lab, v in zip(labels, values[i]))
        return self.csv(name, "time_ns,site,value", rows)

    def summary(self, name: str, payload: dict) -> Path:
        doc = {"tool": "floqchain", "version": __version__, "format": FORMAT_VERSION,
               "config": self.config.to_dict(), "device": self.device, "integrator": self.integrator, **payload}
        return self._write(name, json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")

    def _write(self, name: str, text: str) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        path = self.out / name
        path.write_text(text)
        self.files.append(path)
        return path


def read_series_csv(path) -> tuple[np.ndarray, np.ndarray, tuple]:
    """(times, values (n_t, n_sites), labels) from a ``time_ns,site,value`` file."""
    lines = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    if not lines or lines[0].strip() != "time_ns,site,value":
        raise ConfigError(f"{path}: expected a time_ns,site,value header")
    data = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:]])
    if data.size == 0:
        raise ConfigError(f"{path}: no data rows")
    times = np.unique(data[:, 0])
    labels = tuple(int(s) for s in np.unique(data[:, 1]))
    if data.shape[0] != times.size * len(labels):
        raise ConfigError(f"{path}: the grid is not complete")
    order = np.lexsort((data[:, 1], data[:, 0]))
    return times, data[order, 2].reshape(times.size, len(labels)), labels


# -- experiment plumbing ----------------------------------------------------------------

def model_options(config: ExperimentConfig) -> ModelOptions:
    frame = config["model.frame"]
    zz = config["model.zz"]
    return ModelOptions(frame=frame, levels=config["device.levels"], include_nnn=config["device.nnn"],
                        include_zz=zz > 0, zz_strength=zz if zz > 0 else 0.065)


def integrator(config: ExperimentConfig) -> IntegratorConfig:
    return IntegratorConfig(method=config["integrator.method"], dt=config["integrator.dt"])


def _t_max(config: ExperimentConfig) -> float:
    return config["run.t_max"]


def _confusion(config: ExperimentConfig, n_sites: int) -> ConfusionModel:
    if config["readout.confusion"] == "none":
        return ConfusionModel.perfect(n_sites)
    paper = ConfusionModel.paper()
    if n_sites > paper.n_sites:
        raise ConfigError(f"the paper confusion model covers {paper.n_sites} sites; use --confusion none")
    return ConfusionModel(paper.f_ground[:n_sites], paper.f_excited[:n_sites])


def _seeds(seed: int, n: int) -> list[int]:
    """Independent per-sample seeds derived from one user seed."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def measured_walk(config, device, drive, options, occ, times, cfg, spp) -> dict:
    """Shot-sampled, calibrated populations at each sample time, plus the post-selection kept fraction."""
    basis = build_basis(device.n_sites, options.levels, sum(occ))
    ham = build_hamiltonian(device, drive, options, basis)
    cfg = sampling_config(cfg, drive.period, spp)
    states = states_at(product_state(basis, occ).amplitudes, ham, times, cfg)
    confusion = _confusion(config, device.n_sites)
    shots = config["readout.shots"]
    values, sigma, kept = [], [], []
    for k, seed in enumerate(_seeds(config["readout.seed"], times.size)):
        counts = sample_shots(StateVector(basis, states[:, k]), confusion, shots, seed)
        marg = calibrate_counts(counts, confusion)
        _, frac = post_select(counts, sum(occ))
        values.append(marg.probabilities)
        sigma.append(marg.sigma(confusion))
        kept.append(frac)
    return {"values": np.array(values), "sigma": np.array(sigma), "kept": np.array(kept)}


def _velocity_summary(fit_and_scan) -> dict:
    fit, scan = fit_and_scan
    return {
        "velocity_sites_per_us": fit.value("velocity"), "velocity_error": fit.error("velocity"),
        "fronts": [{"distance": p.site, "time_ns": p.time, "sigma_ns": p.sigma} for p in scan.points],
        "skipped": {str(k): v for k, v in scan.skipped.items()},
    }


def _try_velocity(fn, *args, **kwargs) -> dict:
    try:
        return _velocity_summary(fn(*args, **kwargs))
    except (FitError, ValueError) as exc:
        return {"velocity_error_message": str(exc)}


def _halving(drift) -> dict:
    return {"step_halving_drift": drift}


# -- experiments ------------------------------------------------------------------------

def exp_rabi_sweep(config, w: Writer) -> dict:
    device = resolve_device(config["device.source"], 2)
    nu = config["drive.nu"]
    eps = np.linspace(0.0, config["drive.eps_max"], config["drive.n_points"])
    sweep = run_rabi_sweep(device, eps, _t_max(config), nu, integrator(config),
                           check_halving=config["integrator.check_halving"])
    g = float(device.nn_couplings[0])
    j0 = np.array([bessel_j0(e / nu) for e in eps])
    ratio = sweep.g_eff / g
    w.csv("rabi-sweep.csv", "eps_mhz,frequency_mhz,g_eff_mhz,ratio,abs_j0,confident",
          ((e, f, ge, r, abs(j), "1" if c else "0")
           for e, f, ge, r, j, c in zip(eps, sweep.frequency, sweep.g_eff, ratio, j0, sweep.confident)))
    return {
        "g_nominal_mhz": g,
        "max_abs_deviation": float(np.max(np.abs(ratio - np.abs(j0)))),
        "fitted_scale_mhz": sweep.fit.value("g") if sweep.fit else None,
        "fitted_scale_error": sweep.fit.error("g") if sweep.fit else None,
        **_halving(sweep.halving_drift),
    }


def _pattern(config, n: int) -> DrivePattern:
    nu = config["drive.nu"]
    eps = config["drive.eps"]
    pattern = config["drive.pattern"]
    if pattern == "staggered":
        return DrivePattern.staggered(n, eps, nu)
    return ssh_pattern(pattern, n, eps, nu)


def _initial(config, n: int) -> tuple:
    init = config["run.initial"]
    if init is None:
        return tuple([1] + [0] * (n - 1))
    if len(init) != n or set(init) - set("012"):
        raise ConfigError(f"initial state {init!r} must be {n} digits from 0, 1, 2")
    return tuple(int(c) for c in init)


def exp_walk(config, w: Writer) -> dict:
    options = model_options(config)
    device = resolve_device(config["device.source"], options.levels)
    drive = _pattern(config, device.n_sites)
    occ = _initial(config, device.n_sites)
    spp = config["run.samples_per_period"]
    walk = run_quantum_walk(device, drive, occ, _t_max(config), options, integrator(config), spp,
                            check_halving=config["integrator.check_halving"])
    pops = walk.populations
    w.series("walk.csv", pops.times, pops.values, pops.labels)
    out = {"metadata": walk.metadata, **_halving(walk.halving_drift)}
    if walk.level2 is not None:
        w.series("walk-level2.csv", pops.times, walk.level2.values, pops.labels)
    if sum(occ) == 1:
        src = occ.index(1)
        dists = [d for d in _distances(config) if src + d < device.n_sites]
        out["velocity"] = _try_velocity(walk_front_velocity, walk, dists)
    if config["readout.shots"] > 0:
        meas = measured_walk(config, device, drive, options, occ, pops.times, integrator(config), spp)
        w.series("walk-measured.csv", pops.times, meas["values"], pops.labels)
        out["readout"] = {"shots": config["readout.shots"], "min_kept_fraction": float(meas["kept"].min()),
                          "max_sigma": float(meas["sigma"].max())}
    return out


def exp_reverse(config, w: Writer) -> dict:
    options = model_options(config)
    device = resolve_device(config["device.source"], options.levels)
    t_max = _t_max(config)
    walk = run_reversed_evolution(device, config["drive.eps_a"], config["drive.eps_b"], t_max / 2, options,
                                  config["drive.nu"], config["run.initial"], integrator(config),
                                  config["run.samples_per_period"],
                                  check_halving=config["integrator.check_halving"])
    pops = walk.populations
    w.series("reverse.csv", pops.times, pops.values, pops.labels)
    out = {"echo_fidelity": walk.echo_fidelity, "asymmetry": reversal_asymmetry(walk),
           "metadata": walk.metadata, **_halving(walk.halving_drift)}
    if walk.level2 is not None:
        w.series("reverse-level2.csv", pops.times, walk.level2.values, pops.labels)
        out["peak_level2"] = float(walk.level2.values.max())
    return out


def _otoc_grid(config):
    options = model_options(config)
    device = resolve_device(config["device.source"], options.levels)
    step = config["run.t_step"]
    times = np.arange(0.0, _t_max(config) + 1e-9 * step, step)
    grid = run_otoc(device, config["drive.eps_a"], config["drive.eps_b"], config["run.butterfly"], times,
                    options, config["drive.nu"], integrator(config),
                    check_halving=config["integrator.check_halving"])
    problems = grid.invariant_violations()
    return grid, problems


def exp_otoc(config, w: Writer) -> dict:
    grid, problems = _otoc_grid(config)
    name = config.kind
    w.series(f"{name}.csv", grid.times, grid.values, grid.labels)
    out = {"metadata": grid.metadata, "invariant_violations": problems, **_halving(grid.halving_drift),
           "min_kept_fraction": float(np.min(grid.kept_fraction))}
    n = grid.values.shape[1]
    if name == "otoc":
        out["velocity"] = _try_velocity(otoc_front_velocity, grid, tuple(range(1, n)))
    else:
        rec = recurrence_correlation(grid.times, np.nan_to_num(grid.values), RECURRENCE_WINDOW)
        tail = grid.times >= 0.8 * grid.times[-1]
        out["recurrence"] = {"window_ns": RECURRENCE_WINDOW, "lag_ns": rec.lag, "correlation": rec.correlation}
        out["late_mean_abs"] = float(np.nanmean(np.abs(grid.values[tail])))
    if problems:
        raise InvariantViolation("; ".join(problems))
    return out


def exp_ssh(config, w: Writer) -> dict:
    options = model_options(config)
    device = resolve_device(config["device.source"], options.levels)
    drive = _pattern(config, device.n_sites)
    walk = run_ssh_quench(device, drive, _t_max(config), options, integrator(config),
                          config["run.samples_per_period"],
                          check_halving=config["integrator.check_halving"])
    pops = walk.populations
    w.series("ssh.csv", pops.times, pops.values, pops.labels)
    return {"edge_average": walk.edge_average, "metadata": walk.metadata, **_halving(walk.halving_drift)}


def _distances(config) -> list[int]:
    try:
        d = [int(x) for x in config["run.distances"].split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"distances must be comma-separated integers, got {config['run.distances']!r}") from None
    if not d or min(d) < 1:
        raise ConfigError("distances must be positive")
    return d


def exp_velocity(config, w: Writer) -> dict:
    path = config["run.input"]
    if path is None:
        raise ConfigError("velocity needs --input <walk.csv>")
    times, values, labels = read_series_csv(path)
    src = config["run.source"]
    src_col = int(np.argmax(values[0])) if src is None else labels.index(src)
    cols = [src_col + d for d in _distances(config) if src_col + d < len(labels)]
    dists = [labels[c] - labels[src_col] for c in cols]
    try:
        scan = front_times(times, values[:, cols], dists, min_sites=3)
        fit = fit_velocity(scan.points)
    except FitError as exc:
        raise InvariantViolation(f"velocity fit failed: {exc}") from None
    if not fit.converged:
        raise InvariantViolation("velocity fit did not converge")
    out = {"input": str(path), "source_site": labels[src_col], **_velocity_summary((fit, scan))}
    print(f"v = {fit.value('velocity'):.3f} +- {fit.error('velocity'):.3f} sites/us")
    return out


EXPERIMENTS = {
    "rabi-sweep": exp_rabi_sweep, "walk": exp_walk, "reverse": exp_reverse, "otoc": exp_otoc,
    "ssh": exp_ssh, "velocity": exp_velocity, "long-otoc": exp_otoc,
}


def run_experiment(config: ExperimentConfig) -> tuple[int, list[Path]]:
    """Run one configured experiment; returns (exit status, files written)."""
    cfg = integrator(config)
    period = 1e3 / config["drive.nu"]
    w = Writer(config, {"method": cfg.method, "dt_ns": cfg.dt if cfg.dt is not None else period / STEPS_PER_PERIOD,
                        "steps_per_period": None if cfg.dt is not None else STEPS_PER_PERIOD,
                        "step_halving_check": config["integrator.check_halving"], "halving_tolerance": 1e-4})
    start = time.perf_counter()
    status, error = 0, None
    try:
        summary = EXPERIMENTS[config.kind](config, w)
    except (ConvergenceError, InvariantViolation) as exc:
        status, error, summary = EXIT_INVARIANT, str(exc), {}
    summary["status"] = "ok" if status == 0 else "invariant_violation"
    if error:
        summary["error"] = error
    w.summary(f"{config.kind}.json", summary)
    timing = {"experiment": config.kind, "wall_clock_s": round(time.perf_counter() - start, 3),
              "files": [p.name for p in w.files]}
    w.out.mkdir(parents=True, exist_ok=True)
    (w.out / "timing.json").write_text(json.dumps(timing, indent=2) + "\n")
    if error:
        print(f"error: {error}", file=sys.stderr)
    return status, w.files + [w.out / "timing.json"]


# -- argument parsing -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="floqchain", description="Floquet-engineered transmon chain experiments.")
    parser.add_argument("--version", action="version", version=f"floqchain {__version__}")
    sub = parser.add_subparsers(dest="kind", required=True, metavar="experiment")
    for kind in KINDS:
        p = sub.add_parser(kind)
        p.add_argument("--config", help="INI file; flags override its values")
        p.add_argument("--device", help="paper-10q, uniform:<n>:<g_mhz> or a JSON device file")
        p.add_argument("--eps", type=float)
        p.add_argument("--eps-a", type=float)
        p.add_argument("--eps-b", type=float)
        p.add_argument("--nu", type=float)
        p.add_argument("--levels", type=int, choices=(2, 3))
        p.add_argument("--nnn", action="store_true", default=None)
        p.add_argument("--zz", type=float, nargs="?", const=0.065, help="ZZ strength in MHz (default 0.065)")
        p.add_argument("--frame", choices=("lab", "effective"))
        p.add_argument("--dt", type=float)
        p.add_argument("--t-max", type=float)
        p.add_argument("--shots", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--confusion", choices=("paper", "none"))
        p.add_argument("--out", help="output directory")
        p.add_argument("--no-halving", action="store_true", help="skip the step-halving check")
        if kind in ("otoc", "long-otoc"):
            p.add_argument("--butterfly", type=str.upper, choices=("Z", "X"))
        if kind in ("walk", "ssh"):
            p.add_argument("--pattern", choices=("staggered", "trivial", "nontrivial"))
            p.add_argument("--initial")
        if kind == "velocity":
            p.add_argument("--input", required=True)
            p.add_argument("--source", type=int)
        if kind in ("walk", "velocity"):
            p.add_argument("--distances")
    return parser


FLAG_KEYS = {
    "device": "device.source", "eps": "drive.eps", "eps_a": "drive.eps_a", "eps_b": "drive.eps_b",
    "nu": "drive.nu", "levels": "device.levels", "nnn": "device.nnn", "zz": "model.zz", "frame": "model.frame",
    "dt": "integrator.dt", "t_max": "run.t_max", "shots": "readout.shots", "seed": "readout.seed",
    "confusion": "readout.confusion", "out": "output.dir", "butterfly": "run.butterfly",
    "pattern": "drive.pattern", "initial": "run.initial", "input": "run.input", "source": "run.source",
    "distances": "run.distances",
}


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    overrides = {key: getattr(args, flag) for flag, key in FLAG_KEYS.items()
                 if getattr(args, flag, None) is not None}
    if args.no_halving:
        overrides["integrator.check_halving"] = False
    if args.kind == "long-otoc" and args.butterfly is None and not args.config:
        overrides["run.butterfly"] = "X"
    if args.config:
        return load_config(args.config, args.kind, overrides)
    return parse_config("", args.kind, overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = config_from_args(args)
        status, _ = run_experiment(config)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return status


if __name__ == "__main__":
    sys.exit(main())
