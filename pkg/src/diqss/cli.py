"""``diqss`` command-line front end.

Subcommands: ``keyrate``, ``scan``, ``threshold``, ``validate`` and
``calibrate``. Every output begins with a metadata block (tool version,
config hash, seed, interpretation flags, units), as ``# key: value`` lines
for CSV and as a ``meta`` object for JSON.

Exit codes: 0 ok, 2 config, 3 bracket, 4 validation, 5 calibration.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from . import __version__, config as cfg, keyrate, montecarlo
from .errors import ConfigError, DomainError, ParameterError, SolverError, ThresholdNotFoundError
from .params import INTERPRETATIONS, SENSES

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BRACKET = 3
EXIT_VALIDATION = 4
EXIT_CALIBRATION = 5

UNITS = "d [km]; R_rep [Hz]; E_c [bit/s]; E_m [loaded events/pulse]; R_inf [bit/round]; probabilities dimensionless"

# anchors the calibration sweep is scored against: (strategy, q, value, tolerance)
CALIBRATION_ANCHORS = (
    ("base", None, 0.9632, 0.0005),
    ("postselect", None, 0.9499, 0.0005),
    ("advanced", 0.499, 0.9341, 0.002),
)
VALIDATION_Z = 3.0


class CommandFailed(Exception):
    def __init__(self, code: int, message: str, payload: Optional[dict] = None):
        super().__init__(message)
        self.code = code
        self.payload = payload


def metadata(run: cfg.RunConfig, command: str) -> Dict[str, Any]:
    return {
        "tool": "diqss",
        "version": __version__,
        "command": command,
        "config_sha256": run.sha256,
        "seed": run["seed"],
        "strategy": run.proto.strategy,
        "interpretation": run.proto.interpretation,
        "sense": run.proto.sense,
        "calibration": run.calibration_source,
        "units": UNITS,
    }


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, (int, float)):
        return "%.9g" % value
    return str(value)


def render_csv(meta: Dict[str, Any], columns: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    for k, v in meta.items():
        buf.write(f"# {k}: {v}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    return buf.getvalue()


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


def render_json(meta: Dict[str, Any], body: Dict[str, Any]) -> str:
    return json.dumps(_json_safe({"meta": meta, **body}), indent=2, sort_keys=False) + "\n"


def emit(text: str, out: Optional[str]):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _table_output(fmt_name, meta, columns, rows, extra=None):
    if fmt_name == "csv":
        return render_csv(meta, columns, rows)
    body = {"columns": list(columns), "rows": [list(r) for r in rows]}
    if extra:
        body.update(extra)
    return render_json(meta, body)


# ---------------------------------------------------------------------------
# keyrate

def cmd_keyrate(run: cfg.RunConfig, fmt_name: str) -> str:
    report = keyrate.key_rate_report(run.channel, run.noise, run.proto, run["resolution"])
    meta = metadata(run, "keyrate")
    data = report.as_dict()
    if fmt_name == "csv":
        scalars = [(k, v) for k, v in data.items() if not isinstance(v, (dict, list))]
        scalars.append(("flags", ";".join(report.flags)))
        return render_csv(meta, [k for k, _ in scalars], [[v for _, v in scalars]])
    return render_json(meta, {"report": data})


# ---------------------------------------------------------------------------
# scan

def _point(run: cfg.RunConfig, overrides: Dict[str, Any]) -> Dict[str, float]:
    groups = {"channel": {}, "noise": {}, "protocol": {}}
    for key, value in overrides.items():
        groups[cfg.SCHEMA[key][0]][key] = value
    try:
        channel = run.channel.replace(**groups["channel"])
        noise = run.noise.replace(**groups["noise"])
        proto = run.proto.replace(**groups["protocol"])
    except (ParameterError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    report = keyrate.key_rate_report(channel, noise, proto, run["resolution"])
    return {"E_m": report.E_m, "E_c": report.E_c, "R_inf": report.R_inf,
            "S": report.S, "S_ABC": report.S_ABC, "delta": report.delta}


def scan_table(run: cfg.RunConfig):
    """Columns and rows of a scan, in axis order."""
    axis = run["axis"]
    xs = run.axis_values()
    outputs = run["outputs"]
    fam, fam_values = run["family_param"], run["family_values"]
    members = [None] if fam is None else list(fam_values)
    columns = [axis]
    for out in outputs:
        for m in members:
            columns.append(out if m is None else f"{out}[{fam}={fmt(m)}]")

    def row(x):
        values = []
        results = []
        for m in members:
            overrides = {axis: x}
            if m is not None:
                overrides[fam] = m
            results.append(_point(run, overrides))
        for out in outputs:
            values.extend(r[out] for r in results)
        return [x] + values

    with ThreadPoolExecutor(max_workers=montecarlo.thread_count()) as pool:
        rows = list(pool.map(row, xs))
    return columns, rows


def cmd_scan(run: cfg.RunConfig, fmt_name: str) -> str:
    columns, rows = scan_table(run)
    return _table_output(fmt_name, metadata(run, "scan"), columns, rows)


# ---------------------------------------------------------------------------
# threshold

def threshold_result(run: cfg.RunConfig) -> Dict[str, Any]:
    target = run["target"]
    proto, res = run.proto, run["resolution"]
    if target is None:
        raise ConfigError("target: threshold needs one of " + ", ".join(cfg.THRESHOLD_TARGETS))
    if target == "fidelity":
        root = keyrate.threshold_fidelity(run.noise.eta_l, proto, res)
        residual = keyrate.secret_key_rate(run.noise.replace(F=root), proto, res)
        fixed = {"eta_l": run.noise.eta_l}
    elif target == "local_efficiency":
        root = keyrate.threshold_local_efficiency(run.noise.F, proto, res)
        residual = keyrate.secret_key_rate(run.noise.replace(eta_l=root), proto, res)
        fixed = {"F": run.noise.F}
    else:
        root = keyrate.secure_distance(run.channel, run.noise, proto, run["target_Ec"], res)
        report = keyrate.key_rate_report(run.channel.replace(d=root, eta_t_override=None),
                                         run.noise, proto, res)
        residual = report.E_c - run["target_Ec"]
        fixed = {"target_Ec": run["target_Ec"], "N": run.channel.N, "eta_M": run.channel.eta_M}
    return {"target": target, "root": root, "residual": residual,
            "strategy": proto.strategy, "q": proto.q, **fixed}


def cmd_threshold(run: cfg.RunConfig, fmt_name: str) -> str:
    result = threshold_result(run)
    meta = metadata(run, "threshold")
    if fmt_name == "csv":
        return render_csv(meta, list(result), [list(result.values())])
    return render_json(meta, {"result": result})


# ---------------------------------------------------------------------------
# validate

def validation_rows(run: cfg.RunConfig):
    sim = run.sim_config()
    report = montecarlo.simulate(sim)
    reference = montecarlo.analytic_reference(sim)
    rows = []
    for name, analytic in reference.items():
        est = getattr(report, name)
        z = est.z(analytic)
        rows.append([name, analytic, est.value, est.se, z, abs(z) <= VALIDATION_Z])
    return rows, report


def cmd_validate(run: cfg.RunConfig, fmt_name: str) -> str:
    rows, report = validation_rows(run)
    columns = ["quantity", "analytic", "empirical", "se", "z", "ok"]
    meta = metadata(run, "validate")
    meta.update(trials=report.trials_run, rounds=report.rounds_run)
    text = _table_output(fmt_name, meta, columns, rows)
    failing = [r[0] for r in rows if not r[-1]]
    if failing:
        raise CommandFailed(EXIT_VALIDATION,
                            "disagreement beyond 3 SE: " + ", ".join(failing), {"text": text})
    return text


# ---------------------------------------------------------------------------
# calibrate

def calibration_sweep(run: cfg.RunConfig) -> List[Dict[str, Any]]:
    """Score every (interpretation, sense) pair against the threshold anchors."""
    res = run["resolution"]
    base_proto = run.proto.replace(q=None, strategy="base")
    entries = []
    for interpretation in INTERPRETATIONS:
        for sense in SENSES:
            entry = {"interpretation": interpretation, "sense": sense, "anchors": []}
            for strategy, q, expected, tol in CALIBRATION_ANCHORS:
                proto = base_proto.replace(strategy=strategy, q=q,
                                           interpretation=interpretation, sense=sense)
                try:
                    value = keyrate.threshold_local_efficiency(1.0, proto, res)
                    residual, error = value - expected, None
                except (DomainError, ThresholdNotFoundError, SolverError) as exc:
                    value = residual = None
                    error = f"{type(exc).__name__}: {exc}"
                entry["anchors"].append({
                    "strategy": strategy, "q": q, "expected": expected, "tolerance": tol,
                    "value": value, "residual": residual, "error": error,
                    "ok": residual is not None and abs(residual) <= tol,
                })
            entry["ok"] = all(a["ok"] for a in entry["anchors"])
            entries.append(entry)
    return entries


def choose(entries):
    passing = [e for e in entries if e["ok"]]
    if not passing:
        return None
    return min(passing, key=lambda e: abs(e["anchors"][-1]["residual"]))


def cmd_calibrate(run: cfg.RunConfig, fmt_name: str) -> str:
    entries = calibration_sweep(run)
    chosen = choose(entries)
    meta = metadata(run, "calibrate")
    rows = []
    for e in entries:
        for a in e["anchors"]:
            rows.append([e["interpretation"], e["sense"], a["strategy"], a["q"], a["expected"],
                         a["value"], a["residual"], a["ok"], a["error"] or ""])
    columns = ["interpretation", "sense", "strategy", "q", "expected", "value",
               "residual", "ok", "error"]
    selected = None if chosen is None else {"interpretation": chosen["interpretation"],
                                            "sense": chosen["sense"]}
    text = _table_output(fmt_name, meta, columns, rows, {"selected": selected})
    if chosen is None:
        raise CommandFailed(EXIT_CALIBRATION, "no interpretation/sense pair meets every anchor",
                            {"text": text})
    stamp_path = run["calibration_stamp"] or cfg.DEFAULT_STAMP
    stamp = {
        "tool": "diqss",
        "version": __version__,
        "interpretation": chosen["interpretation"],
        "sense": chosen["sense"],
        "resolution": run["resolution"],
        "anchors": chosen["anchors"],
    }
    Path(stamp_path).write_text(json.dumps(_json_safe(stamp), indent=2, sort_keys=True) + "\n")
    return text


# ---------------------------------------------------------------------------
# entry point

COMMANDS = {
    "keyrate": (cmd_keyrate, "json"),
    "scan": (cmd_scan, "csv"),
    "threshold": (cmd_threshold, "json"),
    "validate": (cmd_validate, "csv"),
    "calibrate": (cmd_calibrate, "json"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="diqss", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"diqss {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file (flat keys)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key; may be repeated")
        p.add_argument("--out", help="write output here instead of stdout")
        p.add_argument("--format", choices=("csv", "json"), help="output format")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    command, default_format = COMMANDS[args.command]
    try:
        run = cfg.load(args.config, args.set, use_stamp=args.command != "calibrate")
        text = command(run, args.format or default_format)
    except (ConfigError, ParameterError, DomainError) as exc:
        print(f"diqss: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ThresholdNotFoundError as exc:
        print(f"diqss: bracket error: {exc}", file=sys.stderr)
        return EXIT_BRACKET
    except CommandFailed as exc:
        if exc.payload and "text" in exc.payload:
            emit(exc.payload["text"], args.out)
        print(f"diqss: {exc}", file=sys.stderr)
        return exc.code
    emit(text, args.out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
