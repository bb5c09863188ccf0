"""Experiment configuration files: strict INI parsing with defaults and a canonical form.

Grammar (also in the README): ``[section]`` headers followed by ``key = value``
lines; ``#`` and ``;`` start comment lines. Values are plain tokens: numbers,
``true``/``false``, ``auto`` where a key allows it, or bare strings. Every key
belongs to a fixed section, and unknown sections or keys are errors.
"""
from __future__ import annotations

import configparser
import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

from .model import DeviceSpec, paper_device, uniform_device

KINDS = ("rabi-sweep", "walk", "reverse", "otoc", "ssh", "velocity", "long-otoc")
FORMAT_VERSION = 1

#: values that "auto" resolves to, per experiment
KIND_DEFAULTS = {
    "rabi-sweep": {"model.frame": "lab", "run.t_max": 2000.0},
    "walk": {"model.frame": "lab", "run.t_max": 250.0, "drive.eps": 400.0, "drive.pattern": "staggered",
             "run.samples_per_period": 4},
    "reverse": {"model.frame": "lab", "run.t_max": 250.0, "run.samples_per_period": 1},
    "otoc": {"model.frame": "effective", "run.t_max": 250.0},
    "ssh": {"model.frame": "lab", "run.t_max": 250.0, "drive.eps": 156.0, "drive.pattern": "nontrivial",
            "run.samples_per_period": 4},
    "velocity": {},
    "long-otoc": {"model.frame": "effective", "run.t_max": 2000.0},
}

_BOOL = {"true": True, "yes": True, "on": True, "1": True,
         "false": False, "no": False, "off": False, "0": False}


@dataclass(frozen=True)
class Key:
    type: str  # "str", "int", "float", "bool"
    default: Any
    auto: bool = False  # accepts "auto" (stored as None)
    choices: tuple = ()
    doc: str = ""


SCHEMA: dict[str, dict[str, Key]] = {
    "experiment": {
        "kind": Key("str", None, choices=KINDS, doc="experiment to run"),
    },
    "device": {
        "source": Key("str", "paper-10q", doc="paper-10q, uniform:<n>:<g_mhz> or a JSON file"),
        "levels": Key("int", 2, choices=(2, 3)),
        "nnn": Key("bool", False, doc="include next-nearest-neighbour couplings"),
    },
    "drive": {
        "eps": Key("float", None, auto=True, doc="walk/ssh amplitude in MHz; auto: 400 (walk), 156 (ssh)"),
        "eps_a": Key("float", 213.6, doc="forward amplitude (MHz)"),
        "eps_b": Key("float", 400.0, doc="backward amplitude (MHz)"),
        "nu": Key("float", 120.0, doc="drive frequency (MHz)"),
        "pattern": Key("str", None, auto=True, choices=("staggered", "trivial", "nontrivial"),
                       doc="auto: staggered (walk), nontrivial (ssh)"),
        "eps_max": Key("float", 480.0, doc="rabi-sweep upper amplitude (MHz)"),
        "n_points": Key("int", 17, doc="rabi-sweep amplitudes from 0 to eps_max"),
    },
    "model": {
        "frame": Key("str", None, auto=True, choices=("lab", "effective"),
                     doc="auto: effective for OTOCs, lab otherwise"),

        "zz": Key("float", 0.0, doc="ZZ strength in MHz, 0 disables (effective frame only)"),
    },
    "run": {
        "t_max": Key("float", None, auto=True, doc="ns; auto picks the per-experiment default"),
        "initial": Key("str", None, auto=True, doc="occupation string, site 1 first"),
        "butterfly": Key("str", "Z", choices=("Z", "X")),
        "t_step": Key("float", 2.0, doc="OTOC grid spacing (ns)"),
        "samples_per_period": Key("int", None, auto=True),
        "input": Key("str", None, auto=True, doc="walk CSV for the velocity experiment"),
        "source": Key("int", None, auto=True, doc="1-based source site for velocity; auto: initial"),
        "distances": Key("str", "1,2,3,4,5", doc="front distances for velocity fits"),
    },
    "integrator": {
        "method": Key("str", "commutator_free_magnus4",
                      choices=("commutator_free_magnus4", "piecewise_exponential_midpoint", "rk4")),
        "dt": Key("float", None, auto=True, doc="ns; auto: T/64 under drive"),
        "check_halving": Key("bool", True, doc="rerun at dt/2 and fail above 1e-4 drift"),
    },
    "readout": {
        "shots": Key("int", 0, doc="0 reports exact populations only"),
        "seed": Key("int", 0),
        "confusion": Key("str", "paper", choices=("paper", "none")),
    },
    "output": {
        "dir": Key("str", "out"),
    },
}


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


def _format(value) -> str:
    if value is None:
        return "auto"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def convert(section: str, name: str, raw: str, line: int | None = None):
    """Typed value of ``raw`` for a schema key, raising ConfigError with ``line``."""
    key = SCHEMA[section][name]
    text = raw.strip()
    if key.auto and text.lower() == "auto":
        return None
    try:
        if key.type == "int":
            value = int(text)
        elif key.type == "float":
            value = float(text)
        elif key.type == "bool":
            value = _BOOL[text.lower()]
        else:
            value = text
    except (ValueError, KeyError):
        raise ConfigError(f"[{section}] {name} expects {key.type}, got {raw!r}", line) from None
    if key.type == "str" and name in ("butterfly",):
        value = value.upper()
    if key.choices and value not in key.choices:
        raise ConfigError(f"[{section}] {name} = {raw!r} is not one of {list(key.choices)}", line)
    return value


@dataclass(frozen=True)
class ExperimentConfig:
    values: Mapping[str, Mapping[str, Any]]

    def __getitem__(self, item: str):
        section, name = item.split(".")
        return self.values[section][name]

    @property
    def kind(self) -> str:
        return self["experiment.kind"]

    def canonical(self) -> str:
        """Sorted, fully resolved INI text; parse_config(canonical()) round-trips."""
        lines = []
        for section in sorted(self.values):
            lines.append(f"[{section}]")
            lines += [f"{k} = {_format(v)}" for k, v in sorted(self.values[section].items())]
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {s: dict(sorted(v.items())) for s, v in sorted(self.values.items())}


def _key_lines(text: str) -> dict:
    """(section, key) -> line number, for error messages."""
    where, section = {}, None
    for no, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        m = re.fullmatch(r"\[([^\]]+)\]", stripped)
        if m:
            section = m.group(1).strip()
            where.setdefault((section, None), no)
            continue
        m = re.match(r"([^=:#;\s][^=:]*?)\s*[=:]", stripped)
        if m and section is not None:
            where.setdefault((section, m.group(1).strip().lower()), no)
    return where


def defaults() -> dict:
    return {s: {k: key.default for k, key in keys.items()} for s, keys in SCHEMA.items()}


def _validated(values: dict) -> ExperimentConfig:
    if values["experiment"]["kind"] is None:
        raise ConfigError("[experiment] kind is required")
    if values["model"]["frame"] is None and values["device"]["levels"] == 3:
        values["model"]["frame"] = "lab"
    for item, value in KIND_DEFAULTS[values["experiment"]["kind"]].items():
        section, name = item.split(".")
        if values[section][name] is None:
            values[section][name] = value
    if values["model"]["frame"] == "effective" and values["device"]["levels"] != 2:
        raise ConfigError("the effective model has two levels per site")
    if values["model"]["zz"] < 0:
        raise ConfigError("[model] zz must be non-negative")
    if values["readout"]["shots"] < 0:
        raise ConfigError("[readout] shots must be non-negative")
    if values["drive"]["n_points"] < 5:
        raise ConfigError("[drive] n_points must be at least 5")
    resolve_device(values["device"]["source"], values["device"]["levels"])
    return ExperimentConfig({s: dict(v) for s, v in values.items()})


def parse_config(text: str, kind: str | None = None, overrides: Mapping[str, Any] | None = None) -> ExperimentConfig:
    """Parse INI text, apply ``overrides`` ("section.key" -> value), resolve defaults and validate.

    ``kind`` fills in a missing [experiment] kind and must match a present one.
    "auto" values are resolved after the overrides, so a flag such as levels
    can still steer the automatic frame choice.
    """
    parser = configparser.ConfigParser(interpolation=None, strict=True, inline_comment_prefixes=None,
                                       default_section="__defaults__")
    try:
        parser.read_string(text)
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"duplicate key {exc.option!r} in [{exc.section}]", exc.lineno) from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"duplicate section [{exc.section}]", exc.lineno) from None
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("key outside any [section]", exc.lineno) from None
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else None
        raise ConfigError("malformed line (expected key = value)", line) from None
    where = _key_lines(text)
    values = defaults()
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]", where.get((section, None)))
        for name, raw in parser.items(section):
            line = where.get((section, name))
            if name not in SCHEMA[section]:
                raise ConfigError(f"unknown key {name!r} in [{section}]", line)
            values[section][name] = convert(section, name, raw, line)
    if kind is not None:
        if values["experiment"]["kind"] not in (None, kind):
            raise ConfigError(f"config is for {values['experiment']['kind']!r}, not {kind!r}",
                              where.get(("experiment", "kind")))
        values["experiment"]["kind"] = kind
    for item, value in (overrides or {}).items():
        section, _, name = item.partition(".")
        if name not in SCHEMA.get(section, {}):
            raise ConfigError(f"unknown key {item!r}")
        values[section][name] = convert(section, name, _format(value))
    return _validated(values)


def load_config(path, kind: str | None = None, overrides: Mapping[str, Any] | None = None) -> ExperimentConfig:
    return parse_config(Path(path).read_text(), kind, overrides)


def resolve_device(source: str, levels: int = 2) -> DeviceSpec:
    """Device from ``paper-10q``, ``uniform:<n>:<g_mhz>`` or a JSON file in the DeviceSpec.to_dict layout."""
    if source == "paper-10q":
        return paper_device(levels)
    if source.startswith("uniform:"):
        parts = source.split(":")
        try:
            n, g = int(parts[1]), float(parts[2])
        except (IndexError, ValueError):
            raise ConfigError(f"bad uniform device {source!r}; expected uniform:<n>:<g_mhz>") from None
        if len(parts) != 3 or n < 2:
            raise ConfigError(f"bad uniform device {source!r}; expected uniform:<n>:<g_mhz>")
        return uniform_device(n, g, levels)
    path = Path(source)
    if not path.is_file():
        raise ConfigError(f"device {source!r} is neither a preset nor a file")
    data = json.loads(path.read_text())
    data = {k: v for k, v in data.items() if k not in ("n_sites", "levels")}
    unknown = set(data) - {"nn_couplings", "nnn_couplings", "anharmonicities"}
    if unknown or "nn_couplings" not in data:
        raise ConfigError("device file needs 'nn_couplings' and may add 'nnn_couplings', 'anharmonicities'; "
                          f"got {sorted(data)}")
    try:
        return DeviceSpec(data["nn_couplings"], data.get("nnn_couplings"), data.get("anharmonicities"), levels)
    except ValueError as exc:
        raise ConfigError(f"device file {source!r}: {exc}") from None
