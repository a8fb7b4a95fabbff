"""Flat JSON run configuration for the command-line front end.

A config file is one JSON object whose keys mirror the parameter dataclasses
plus a few run options. Unknown keys are rejected. ``--set key=value`` pairs
are applied on top of the file; values are parsed as JSON when possible and
kept as strings otherwise.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, Tuple

import numpy as np

from .errors import ConfigError, DiqssError
from .montecarlo import SimConfig
from .params import ChannelParams, NoiseParams, ProtocolParams

SCAN_OUTPUTS = ("E_m", "E_c", "R_inf", "S", "S_ABC", "delta")
SCAN_AXES = ("T", "d", "alpha", "eta_M", "N", "R_rep", "eta_t_override",
             "F", "eta_l", "p", "P_c", "P_GHZ", "q")
THRESHOLD_TARGETS = ("fidelity", "local_efficiency", "distance")
DEFAULT_STAMP = "diqss_calibration.json"


def _number(key, v):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{key}: expected a number, got {v!r}")
    if not math.isfinite(v):
        raise ConfigError(f"{key}: must be finite, got {v!r}")
    return float(v)


def _optional_number(key, v):
    return None if v is None else _number(key, v)


def _integer(key, v):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or int(v) != v:
        raise ConfigError(f"{key}: expected an integer, got {v!r}")
    return int(v)


def _optional_integer(key, v):
    return None if v is None else _integer(key, v)


def _string(key, v):
    if not isinstance(v, str):
        raise ConfigError(f"{key}: expected a string, got {v!r}")
    return v


def _optional_string(key, v):
    return None if v is None else _string(key, v)


def _string_list(key, v):
    if isinstance(v, str):
        v = [s for s in v.split(",") if s]
    if not isinstance(v, list) or not all(isinstance(s, str) for s in v):
        raise ConfigError(f"{key}: expected a list of strings, got {v!r}")
    return list(v)


def _optional_number_list(key, v):
    if v is None:
        return None
    if not isinstance(v, list):
        raise ConfigError(f"{key}: expected a list of numbers, got {v!r}")
    return [_number(key, x) for x in v]


# key -> (group, parser, default)
SCHEMA: Dict[str, Tuple[str, Callable[[str, Any], Any], Any]] = {
    "T": ("channel", _number, 0.5),
    "d": ("channel", _number, 0.0),
    "alpha": ("channel", _number, 0.2),
    "eta_M": ("channel", _number, 1.0),
    "N": ("channel", _integer, 0),
    "R_rep": ("channel", _number, 1e7),
    "eta_t_override": ("channel", _optional_number, None),
    "F": ("noise", _number, 1.0),
    "eta_l": ("noise", _number, 1.0),
    "p": ("protocol", _number, 0.5),
    "P_c": ("protocol", _number, 0.5),
    "P_GHZ": ("protocol", _number, 0.25),
    "q": ("protocol", _optional_number, None),
    "strategy": ("protocol", _string, "base"),
    "interpretation": ("protocol", _optional_string, None),
    "sense": ("protocol", _optional_string, None),
    "trials": ("sim", _integer, 100_000),
    "rounds": ("sim", _optional_integer, None),
    "seed": ("sim", _integer, 1),
    "race": ("sim", _string, "designated"),
    "resolution": ("run", _integer, 64),
    "axis": ("scan", _optional_string, None),
    "start": ("scan", _optional_number, None),
    "stop": ("scan", _optional_number, None),
    "steps": ("scan", _integer, 101),
    "scale": ("scan", _string, "linear"),
    "outputs": ("scan", _string_list, ["E_m", "E_c"]),
    "family_param": ("scan", _optional_string, None),
    "family_values": ("scan", _optional_number_list, None),
    "target": ("threshold", _optional_string, None),
    "target_Ec": ("threshold", _number, 1.0),
    "calibration_stamp": ("run", _optional_string, None),
}


def parse_set(pairs: Iterable[str]) -> Dict[str, Any]:
    """Turn ``key=value`` strings into a dict; values are JSON when they parse."""
    out = {}
    for pair in pairs or ():
        key, sep, text = pair.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"--set expects key=value, got {pair!r}")
        try:
            out[key] = json.loads(text)
        except json.JSONDecodeError:
            out[key] = text
    return out


def load_raw(path: Optional[str], overrides: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    raw: Dict[str, Any] = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
    raw = {**raw, **(overrides or {})}
    unknown = sorted(set(raw) - set(SCHEMA))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    return raw


@dataclass(frozen=True)
class RunConfig:
    values: Dict[str, Any]
    explicit: frozenset
    channel: ChannelParams
    noise: NoiseParams
    proto: ProtocolParams
    calibration_source: str

    def __getitem__(self, key):
        return self.values[key]

    @property
    def sha256(self) -> str:
        text = json.dumps(self.values, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    def sim_config(self) -> SimConfig:
        try:
            return SimConfig(self.channel, self.noise, self.proto, self["trials"],
                             self["seed"], self["rounds"], self["race"])
        except DiqssError as exc:
            raise ConfigError(str(exc)) from None

    def axis_values(self) -> List[float]:
        axis, start, stop = self["axis"], self["start"], self["stop"]
        steps, scale = self["steps"], self["scale"]
        if axis is None:
            raise ConfigError("axis: a scan needs an axis")
        if axis not in SCAN_AXES:
            raise ConfigError(f"axis: unknown parameter {axis!r}; choose from {', '.join(SCAN_AXES)}")
        if start is None or stop is None:
            raise ConfigError("start/stop: a scan needs both")
        if not start < stop:
            raise ConfigError(f"start: must be < stop ({start} >= {stop})")
        if steps < 2:
            raise ConfigError(f"steps: must be >= 2, got {steps}")
        if scale == "linear":
            values = np.linspace(start, stop, steps)
        elif scale == "log":
            if start <= 0:
                raise ConfigError("start: a log scan needs start > 0")
            values = np.geomspace(start, stop, steps)
        else:
            raise ConfigError(f"scale: expected 'linear' or 'log', got {scale!r}")
        if axis == "N":
            if not np.all(values == np.round(values)):
                raise ConfigError("axis: N takes integer values; choose start/stop/steps accordingly")
            return [int(v) for v in np.round(values)]
        return [float(v) for v in values]


def read_stamp(path: str) -> Dict[str, Any]:
    try:
        stamp = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"calibration_stamp: cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"calibration_stamp: {path} is not valid JSON: {exc}") from None
    if not isinstance(stamp, dict) or "interpretation" not in stamp or "sense" not in stamp:
        raise ConfigError(f"calibration_stamp: {path} lacks interpretation/sense")
    return stamp


def build(raw: Dict[str, Any], use_stamp: bool = True) -> RunConfig:
    """Validate a raw dict and build the typed run configuration.

    Args:
        raw: Flat key/value mapping, already checked for unknown keys.
        use_stamp: Read ``calibration_stamp`` to fill interpretation and sense.
            The calibrate command passes False because it writes the stamp.
    """
    values = {}
    for key, (_, parser, default) in SCHEMA.items():
        values[key] = parser(key, raw[key]) if key in raw else default
    for key in values["outputs"]:
        if key not in SCAN_OUTPUTS:
            raise ConfigError(f"outputs: unknown output {key!r}; choose from {', '.join(SCAN_OUTPUTS)}")
    if values["target"] is not None and values["target"] not in THRESHOLD_TARGETS:
        raise ConfigError(f"target: expected one of {', '.join(THRESHOLD_TARGETS)}")
    fam = values["family_param"]
    if fam is not None:
        if fam not in SCAN_AXES:
            raise ConfigError(f"family_param: unknown parameter {fam!r}")
        if not values["family_values"]:
            raise ConfigError("family_values: required with family_param")
        if fam == "N":
            values["family_values"] = [_integer("family_values", v) for v in values["family_values"]]

    source = "default"
    if use_stamp and values["calibration_stamp"] is not None:
        stamp = read_stamp(values["calibration_stamp"])
        for key in ("interpretation", "sense"):
            if values[key] is None:
                values[key] = stamp[key]
        source = f"stamp:{values['calibration_stamp']}"
    if raw.get("interpretation") is not None or raw.get("sense") is not None:
        source = "explicit" if source == "default" else source + "+explicit"
    values["interpretation"] = values["interpretation"] or "A"
    values["sense"] = values["sense"] or "min"

    def group(name):
        return {k: values[k] for k, (g, _, _) in SCHEMA.items() if g == name}

    try:
        channel = ChannelParams(**group("channel"))
        noise = NoiseParams(**group("noise"))
        proto = ProtocolParams(**group("protocol"))
    except DiqssError as exc:
        raise ConfigError(str(exc)) from None
    if values["resolution"] < 8:
        raise ConfigError(f"resolution: must be >= 8, got {values['resolution']}")
    return RunConfig(values, frozenset(raw), channel, noise, proto, source)


def load(path: Optional[str], set_pairs: Iterable[str] = (), use_stamp: bool = True) -> RunConfig:
    return build(load_raw(path, parse_set(set_pairs)), use_stamp)
