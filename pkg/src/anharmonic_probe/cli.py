"""Command-line runner: ``anharmonic-probe <command> --config run.json``.

Each command reads one JSON document, runs a sweep or experiment and writes
a table (CSV or JSON).  Outputs depend only on the config and the seed, so
reruns are byte-identical.  Exit codes: 0 success, 2 bad config,
3 numerical-validity failure, 4 infeasible scale.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from . import dynamics as dyn
from . import inference as inf
from . import metrology as met
from . import oracle as orc
from .dynamics import CUBIC, QUARTIC, ProtocolParams
from .errors import (CAPABILITY_ERRORS, NUMERICAL_ERRORS, CapabilityError, ConfigError,
                     PerturbationWarning)
from .metrology import HETERODYNE, HOMODYNE, MeasurementConfig

SCHEMA_VERSION = 1
COMMANDS = ("ratio-curve", "validate-map", "qfi-table", "estimate", "losses")
PARAM_FIELDS = tuple(f.name for f in fields(ProtocolParams))
MEAS_FIELDS = tuple(f.name for f in fields(MeasurementConfig))
SWEEP_AXES = PARAM_FIELDS + ("n_photons",)
TOP_KEYS = {"command", "params", "kinds", "measurement", "sweep", "output", "seed",
            "threads", "options"}
RATIO_CURVE_MAX_NP = 35

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_CAPABILITY = 0, 2, 3, 4


@dataclass(frozen=True)
class Sweep:
    axis: str
    values: tuple


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    params: ProtocolParams
    measurement: MeasurementConfig = field(default_factory=MeasurementConfig)
    kinds: tuple = (QUARTIC, CUBIC)
    sweep: Optional[Sweep] = None
    output_path: Optional[str] = None
    output_format: str = "csv"
    seed: int = 0
    threads: int = 1
    options: Dict[str, Any] = field(default_factory=dict)

    def points(self) -> List[ProtocolParams]:
        if self.sweep is None:
            return [self.params]
        return [apply_axis(self.params, self.sweep.axis, v) for v in self.sweep.values]

    def tagged(self) -> List[tuple]:
        """(N_p, params) pairs; N_p is the configured value when it is the sweep axis."""
        pts = self.points()
        if self.sweep is not None and self.sweep.axis == "n_photons":
            return [(float(v), p) for v, p in zip(self.sweep.values, pts)]
        return [(p.n_photons, p) for p in pts]


def _complex(value, what):
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return complex(float(value[0]), float(value[1]))
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return complex(value)
    raise ConfigError(f"{what} must be a number or a [re, im] pair, got {value!r}")


def apply_axis(params: ProtocolParams, axis: str, value) -> ProtocolParams:
    if axis == "n_photons":
        if value < 0:
            raise ConfigError(f"n_photons must be >= 0, got {value!r}")
        return replace(params, alpha=math.sqrt(value))
    if axis == "alpha":
        return replace(params, alpha=_complex(value, "alpha"))
    return replace(params, **{axis: value})


def parse_config(doc: dict, command: Optional[str] = None) -> ExperimentConfig:
    """Validate a config document; every problem raises ConfigError."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(doc) - TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}; allowed: {sorted(TOP_KEYS)}")
    cmd = command or doc.get("command")
    if cmd not in COMMANDS:
        raise ConfigError(f"command must be one of {COMMANDS}, got {cmd!r}")
    if command and doc.get("command") not in (None, command):
        raise ConfigError(f"config is for {doc['command']!r} but {command!r} was requested")

    raw = dict(doc.get("params", {}))
    bad = set(raw) - set(PARAM_FIELDS)
    if bad:
        raise ConfigError(f"unknown params {sorted(bad)}; allowed: {list(PARAM_FIELDS)}")
    if "lam" not in raw:
        raise ConfigError("params.lam (coupling) is required")
    if "alpha" in raw:
        raw["alpha"] = _complex(raw["alpha"], "params.alpha")
    try:
        params = ProtocolParams(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid params: {exc}") from None

    meas = dict(doc.get("measurement", {}))
    bad = set(meas) - set(MEAS_FIELDS)
    if bad:
        raise ConfigError(f"unknown measurement keys {sorted(bad)}; allowed: {list(MEAS_FIELDS)}")
    try:
        measurement = MeasurementConfig(**meas)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid measurement: {exc}") from None

    kinds = tuple(doc.get("kinds", (QUARTIC, CUBIC)))
    if not kinds or any(k not in (QUARTIC, CUBIC) for k in kinds):
        raise ConfigError(f"kinds must be a non-empty subset of {[QUARTIC, CUBIC]}")

    sweep = None
    if "sweep" in doc:
        s = doc["sweep"]
        if not isinstance(s, dict) or "axis" not in s or "values" not in s:
            raise ConfigError('sweep must look like {"axis": name, "values": [...]}')
        if s["axis"] not in SWEEP_AXES:
            raise ConfigError(f"sweep axis {s['axis']!r} is not one of {list(SWEEP_AXES)}")
        if not isinstance(s["values"], list) or not s["values"]:
            raise ConfigError("sweep values must be a non-empty list")
        sweep = Sweep(s["axis"], tuple(s["values"]))

    out = doc.get("output", {})
    fmt = out.get("format", "csv")
    if fmt not in ("csv", "json"):
        raise ConfigError(f"output.format must be csv or json, got {fmt!r}")
    seed = doc.get("seed", 0)
    threads = doc.get("threads", 1)
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed must be a non-negative integer")
    if not isinstance(threads, int) or threads < 1:
        raise ConfigError("threads must be a positive integer")
    options = doc.get("options", {})
    if not isinstance(options, dict):
        raise ConfigError("options must be an object")
    cfg = ExperimentConfig(cmd, params, measurement, kinds, sweep, out.get("path"), fmt,
                           seed, threads, dict(options))
    try:
        points = cfg.points()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid sweep value: {exc}") from None
    if cmd == "ratio-curve":
        if sweep is None:
            raise ConfigError("ratio-curve needs a sweep (usually over n_photons)")
        big = [p.n_photons for p in points if p.n_photons > RATIO_CURVE_MAX_NP + 1e-9]
        if big:
            raise CapabilityError(f"ratio-curve supports N_p <= {RATIO_CURVE_MAX_NP}; got {big}")
    return cfg


def load_config(path: str, command: Optional[str] = None) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path!r} is not valid JSON: {exc}") from None
    return parse_config(doc, command)


# --------------------------------------------------------------------------
# table output

def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _json_value(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else repr(v)
    if isinstance(v, complex):
        return [_json_value(v.real), _json_value(v.imag)]
    if isinstance(v, dict):
        return {k: _json_value(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_json_value(x) for x in v]
    return v


def render(rows: List[dict], fmt: str, command: str) -> str:
    if fmt == "json":
        doc = {"schema": SCHEMA_VERSION, "command": command, "rows": _json_value(rows)}
        return json.dumps(doc, indent=2) + "\n"
    columns: List[str] = []
    for r in rows:
        columns.extend(k for k in r if k not in columns)
    buf = io.StringIO()
    buf.write(f"# schema={SCHEMA_VERSION}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(r.get(c)) for c in columns])
    return buf.getvalue()


def _pmap(fn: Callable, items: Sequence, threads: int) -> list:
    """Ordered map, optionally on a thread pool (numpy releases the GIL)."""
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(threads) as pool:
        return list(pool.map(fn, items))


# --------------------------------------------------------------------------
# commands

def cmd_ratio_curve(cfg: ExperimentConfig) -> List[dict]:
    optimize = bool(cfg.options.get("optimize_phase", False))
    jobs = [(n, p, k) for n, p in cfg.tagged() for k in cfg.kinds]

    def one(job):
        n, p, kind = job
        if optimize:
            phi, fi = met.optimize_phase(p, kind, config=cfg.measurement)
        else:
            phi, fi = cfg.measurement.phi, met.fisher_homodyne(cfg.measurement, p, kind)
        qfi = met.qfi_numeric(p, kind)
        return {"N_p": n, "kind": kind, "phi_star": float(phi), "fi": fi,
                "qfi": qfi, "ratio": fi / qfi if qfi > 0 else 0.0}

    return _pmap(one, jobs, cfg.threads)


def cmd_validate_map(cfg: ExperimentConfig) -> List[dict]:
    strengths = cfg.options.get("strengths", [2e-3, 1e-3])
    threshold = cfg.options.get("threshold")
    jobs = [(n, p, k, s) for n, p in cfg.tagged() for k in cfg.kinds
            for s in [0.0] + [v / 2 ** j for v in strengths for j in range(3)]]

    def one(job):
        n, p, kind, s = job
        run = orc.run_protocol(p.with_strength(kind, s), kind, threshold=threshold)
        d = run.diagnostics
        return {"kind": kind, "lam": p.lam, "N_p": n, "strength": s,
                "deficit": 1.0 - d["map_fidelity"], "field_purity": d["field_purity"],
                "mech_return_fidelity": d["mech_return_fidelity"],
                "visibility": d["visibility"]}

    rows = _pmap(one, jobs, cfg.threads)
    lookup = {(r["kind"], r["lam"], r["N_p"], r["strength"]): r["deficit"] for r in rows}
    for r in rows:
        half = lookup.get((r["kind"], r["lam"], r["N_p"], r["strength"] / 2))
        r["ratio_to_half"] = (r["deficit"] / half if r["strength"] > 0 and half
                              else None)
    return rows


def cmd_qfi_table(cfg: ExperimentConfig) -> List[dict]:
    M = int(cfg.options.get("M", 10_000))
    rows = []
    for n, p in cfg.tagged():
        for kind in cfg.kinds:
            s = p.strength(kind)
            closed = met.qfi_closed(kind, p.lam, n)
            leading = met.qfi_leading(kind, p.lam, n)
            numeric = None
            if n <= inf.MAX_SAMPLING_DIM:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", PerturbationWarning)
                    numeric = met.qfi_numeric(p, kind)
            rows.append({
                "kind": kind, "lam": p.lam, "N_p": n, "strength": s, "M": M,
                "qfi_closed": closed, "qfi_leading": leading, "qfi_numeric": numeric,
                "rel_diff": (abs(numeric - closed) / closed if numeric is not None and closed > 0
                             else None),
                "crb_std": (math.sqrt(met.cramer_rao(closed, M)) if closed > 0 else None),
                "snr_bound": met.snr_bound(s, closed, M),
                "snr_leading": met.snr_bound(s, leading, M),
            })
    return rows


def cmd_estimate(cfg: ExperimentConfig) -> List[dict]:
    opt = cfg.options
    rows = []
    for p in cfg.points():
        for kind in cfg.kinds:
            bracket = opt.get("bracket")
            rep = inf.crb_saturation_experiment(
                p, kind, M=int(opt.get("M", 1000)), n_repeats=int(opt.get("n_repeats", 200)),
                seed=cfg.seed, scheme=cfg.measurement.scheme,
                config=cfg.measurement if opt.get("fixed_phase") else None,
                bracket=tuple(bracket) if bracket else None, threads=cfg.threads)
            rows.append({"record": "saturation", **rep.as_row()})
            if int(opt.get("closure_rounds", 0)) > 0:
                trace = inf.adaptive_closure(p, kind, rounds=int(opt["closure_rounds"]),
                                             M=int(opt.get("closure_M", 20000)), seed=cfg.seed)
                for r in trace:
                    rows.append({"record": "closure", "kind": kind, **r.as_row()})
    return rows


def cmd_losses(cfg: ExperimentConfig) -> List[dict]:
    eps = cfg.options.get("epsilons", [0.0, 0.01, 0.05])
    threshold = cfg.options.get("threshold")
    jobs = [(n, p, k) for n, p in cfg.tagged() for k in cfg.kinds]

    def one(job):
        n, p, kind = job
        return [{"kind": kind, "lam": p.lam, "N_p": n, "nbar": p.nbar, **r.as_row()}
                for r in orc.loss_sweep(p, eps, kind, threshold=threshold)]

    return [r for block in _pmap(one, jobs, cfg.threads) for r in block]


RUNNERS = {"ratio-curve": cmd_ratio_curve, "validate-map": cmd_validate_map,
           "qfi-table": cmd_qfi_table, "estimate": cmd_estimate, "losses": cmd_losses}


def check_report(cfg: ExperimentConfig) -> dict:
    return {"command": cfg.command,
            "points": [{"N_p": p.n_photons, "lam": p.lam, **dyn.validity_flags(p)}
                       for p in cfg.points()]}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="anharmonic-probe", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="JSON experiment config")
    ap.add_argument("--out", help="output path (default: config output.path or stdout)")
    ap.add_argument("--seed", type=int, help="override the config seed")
    ap.add_argument("--threads", type=int, help="worker threads for sweep points")
    ap.add_argument("--check", action="store_true",
                    help="validate the config, print validity flags and exit")
    ap.add_argument("--strict", action="store_true",
                    help="treat perturbative-validity warnings as errors")
    return ap


def run(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.command)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be non-negative")
            cfg = replace(cfg, seed=args.seed)
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError("--threads must be positive")
            cfg = replace(cfg, threads=args.threads)
        if args.check:
            print(json.dumps(_json_value(check_report(cfg)), indent=2))
            return EXIT_OK
        with warnings.catch_warnings():
            if args.strict:
                warnings.simplefilter("error", PerturbationWarning)
            rows = RUNNERS[cfg.command](cfg)
        text = render(rows, cfg.output_format, cfg.command)
        path = args.out or cfg.output_path
        if path:
            try:
                with open(path, "w", encoding="utf-8", newline="") as fh:
                    fh.write(text)
            except OSError as exc:
                raise ConfigError(f"cannot write output {path!r}: {exc.strerror}") from None
        else:
            sys.stdout.write(text)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CAPABILITY_ERRORS as exc:
        print(f"capability error: {exc}", file=sys.stderr)
        return EXIT_CAPABILITY
    except NUMERICAL_ERRORS + (PerturbationWarning,) as exc:
        print(f"numerical validity error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
