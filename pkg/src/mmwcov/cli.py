"""Command-line experiment runner.

A run is described by a flat ``key = value`` document. Every key that
carries a physical quantity names its unit (``lambda_bs_per_km2``,
``p_tx_dbm``), so a value can never be read in the wrong unit. Example::

    mode = validate
    scheme = MU
    u_max = 2
    trials = 2000

Outputs are CSV curves named ``<mode>_<scheme>-<curve>_<digest>.csv`` and a
JSON summary holding the resolved configuration, the parameter digest,
library versions, wall time and any warnings raised on the way.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .analytic.coverage import CoverageCurve, engine_for, rate_curve, sinr_curve
from .compare import (DEFAULT_PERCENTILES, compare_curves, horizontal_gap,
                      power_normalized_params)
from .netgeom import PER_KM2, NetworkParams, dbm_to_watts, interference_config
from .simkernel import ExperimentPlan, run_experiment

__all__ = ["ConfigError", "RunConfig", "parse_config", "execute", "main", "defaults_text"]

MODES = ("analytic", "simulate", "validate", "compare", "sweep")
CSV_HEADER = ("threshold_db", "ccdf", "ci_low", "ci_high")
BOUND_LEVELS = (0.2, 0.35, 0.5, 0.65, 0.8)


class ConfigError(ValueError):
    """Invalid run configuration.

    ``kind`` is one of ``syntax``, ``unknown_key``, ``duplicate_key``,
    ``unit_violation`` or ``missing_field``; ``line`` is 1-based or None.
    """

    def __init__(self, kind: str, message: str, line: int | None = None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)
        self.kind = kind
        self.line = line

    def record(self) -> dict:
        return dict(error=self.kind, message=str(self), line=self.line)


# value converters -------------------------------------------------------

def _number(text):
    try:
        v = float(text)
    except ValueError:
        raise ValueError(f"expected a number, got {text!r}") from None
    if not math.isfinite(v):
        raise ValueError("value must be finite")
    return v


def _integer(text):
    v = _number(text)
    if v != int(v):
        raise ValueError(f"expected an integer, got {text!r}")
    return int(v)


def _boolean(text):
    t = text.lower()
    if t in ("true", "yes", "on", "1"):
        return True
    if t in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"expected true or false, got {text!r}")


def _choice(*options):
    def conv(text):
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {text!r}")
        return text
    return conv


def _number_list(text):
    items = [s.strip() for s in text.split(",") if s.strip()]
    if not items:
        raise ValueError("expected a comma separated list of numbers")
    return tuple(_number(s) for s in items)


def _check(pred, what):
    def check(v):
        if not pred(v):
            raise ValueError(f"value {v!r} violates {what}")
        return v
    return check


_pos = _check(lambda v: v > 0, "> 0")
_nonneg = _check(lambda v: v >= 0, ">= 0")
_prob = _check(lambda v: 0 <= v <= 1, "0 <= value <= 1")


@dataclass(frozen=True)
class _Key:
    field: str
    parse: object
    check: object = None
    to_si: object = None
    unit: bool = True


# Network keys map to NetworkParams fields; ``to_si`` converts to SI units.
NETWORK_KEYS = {
    "f_c_ghz": _Key("f_c", _number, _pos, lambda v: v * 1e9),
    "bandwidth_mhz": _Key("bandwidth", _number, _pos, lambda v: v * 1e6),
    "p_los": _Key("p_los", _number, _prob),
    "d_m": _Key("D", _number, _pos),
    "alpha_los": _Key("alpha_los", _number, _pos),
    "alpha_nlos": _Key("alpha_nlos", _number, _pos),
    "xi_los_db": _Key("xi_los", _number, _nonneg),
    "xi_nlos_db": _Key("xi_nlos", _number, _nonneg),
    "lambda_bs_per_km2": _Key("lambda_bs", _number, _pos, lambda v: v * PER_KM2),
    "lambda_ue_per_km2": _Key("lambda_ue", _number, _pos, lambda v: v * PER_KM2),
    "p_tx_dbm": _Key("p_tx", _number, None, lambda v: float(dbm_to_watts(v))),
    "n_bs": _Key("n_bs", _integer, _pos),
    "n_ue": _Key("n_ue", _integer, _pos),
    "eta_los": _Key("eta_los", _integer, _pos),
    "eta_nlos": _Key("eta_nlos", _integer, _pos),
    "u_max": _Key("u_max", _integer, _pos),
    "n_s": _Key("n_s", _integer, _pos),
    "noise_figure_db": _Key("noise_figure", _number),
    "rho_bs": _Key("rho_bs", _number, _check(lambda v: 0 <= v < 1, "0 <= value < 1")),
    "rho_ue": _Key("rho_ue", _number, _check(lambda v: 0 <= v < 1, "0 <= value < 1")),
    "omega": _Key("omega", _number, _check(lambda v: 0 < v <= 1, "0 < value <= 1")),
    "nu": _Key("nu", _number, _check(lambda v: v >= 1, ">= 1")),
    "sim_window_radius_m": _Key("sim_window_radius", _number, _pos),
    "equiprobable_angles": _Key("equiprobable_angles", _boolean),
}

RUN_KEYS = {
    "mode": _Key("mode", _choice(*MODES)),
    "preset": _Key("preset", _choice("baseline", "interference")),
    "scheme": _Key("scheme", _choice("MU", "SU", "SM")),
    "seed": _Key("seed", _integer, _nonneg),
    "trials": _Key("trials", _integer, _pos),
    "threshold_min_db": _Key("threshold_min_db", _number),
    "threshold_max_db": _Key("threshold_max_db", _number),
    "threshold_step_db": _Key("threshold_step_db", _number, _pos),
    "rate_min_bps": _Key("rate_min_bps", _number, _pos),
    "rate_max_bps": _Key("rate_max_bps", _number, _pos),
    "rate_points": _Key("rate_points", _integer, _check(lambda v: v >= 2, ">= 2")),
    "interference": _Key("interference", _boolean),
    "channel_mode": _Key("channel_mode", _choice("physical", "virtual")),
    "cutoff_db": _Key("cutoff_db", _number, _pos),
    "ue_margin_m": _Key("ue_margin_m", _number, _pos),
    "laplace": _Key("laplace", _choice("auto", "none", "single", "bounds")),
    "sweep_variable": _Key("sweep_variable", _choice(*NETWORK_KEYS)),
    "sweep_values": _Key("sweep_values", _number_list),
    "sweep_threshold_db": _Key("sweep_threshold_db", _number),
    "percentiles": _Key("percentiles", _number_list,
                        _check(lambda v: all(0 < p < 1 for p in v), "0 < p < 1")),
    "compare_with": _Key("compare_with", _choice("SU", "SM")),
    "compare_metric": _Key("compare_metric", _choice("per_user", "sum")),
    "n_ue_sm": _Key("n_ue_sm", _integer, _pos),
    "output_dir": _Key("output_dir", str),
}

# Quantities whose bare name lacks the unit the document requires.
_UNITLESS_ALIASES = {k.rsplit("_", 1)[0]: k for k in NETWORK_KEYS
                     if k.endswith(("_ghz", "_mhz", "_m", "_db", "_dbm"))}
_UNITLESS_ALIASES.update({"lambda_bs": "lambda_bs_per_km2", "lambda_ue": "lambda_ue_per_km2",
                          "D": "d_m", "f_c": "f_c_ghz", "cutoff": "cutoff_db",
                          "ue_margin": "ue_margin_m"})


@dataclass(frozen=True)
class RunConfig:
    """Validated run description. ``overrides`` holds network keys as written."""

    mode: str
    params: NetworkParams
    overrides: dict = field(default_factory=dict)
    preset: str = "baseline"
    scheme: str = "MU"
    seed: int = 0
    trials: int = 1000
    threshold_min_db: float = -10.0
    threshold_max_db: float = 40.0
    threshold_step_db: float = 1.0
    rate_min_bps: float = 1e5
    rate_max_bps: float = 1e11
    rate_points: int = 121
    interference: bool = False
    channel_mode: str = "physical"
    cutoff_db: float = 60.0
    ue_margin_m: float = 1000.0
    laplace: str = "auto"
    sweep_variable: str | None = None
    sweep_values: tuple | None = None
    sweep_threshold_db: float = 10.0
    percentiles: tuple = DEFAULT_PERCENTILES
    compare_with: str = "SU"
    compare_metric: str = "per_user"
    n_ue_sm: int = 7
    output_dir: str = "."

    @property
    def threshold_grid(self) -> np.ndarray:
        n = int(round((self.threshold_max_db - self.threshold_min_db) / self.threshold_step_db))
        return self.threshold_min_db + self.threshold_step_db * np.arange(n + 1)

    @property
    def rate_grid(self) -> np.ndarray:
        return np.logspace(math.log10(self.rate_min_bps), math.log10(self.rate_max_bps),
                           self.rate_points)

    def plan(self, params: NetworkParams | None = None, scheme: str | None = None,
             seed: int | None = None) -> ExperimentPlan:
        return ExperimentPlan(params or self.params, scheme or self.scheme, self.trials,
                              self.seed if seed is None else seed, self.threshold_grid,
                              self.rate_grid, self.interference, self.channel_mode,
                              self.cutoff_db, self.ue_margin_m)

    def text(self) -> str:
        """Canonical document that reproduces this configuration."""
        lines = [f"mode = {self.mode}", f"preset = {self.preset}"]
        for key in RUN_KEYS:
            if key in ("mode", "preset", "output_dir"):
                continue
            v = getattr(self, key)
            if v is None:
                continue
            lines.append(f"{key} = {_format(v)}")
        lines += [f"{k} = {v}" for k, v in self.overrides.items()]
        return "\n".join(lines) + "\n"


def _format(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ", ".join(_format(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _base_params(preset: str) -> NetworkParams:
    return interference_config() if preset == "interference" else NetworkParams()


def parse_config(text: str, overrides: dict | None = None) -> RunConfig:
    """Parse and validate a run document.

    Unset keys take the baseline defaults (or the interference preset).
    ``overrides`` maps run keys to already typed values, as given on the
    command line, and wins over the document.

    Raises
    ------
    ConfigError
        On malformed lines, unknown or repeated keys, values out of their
        physical range and missing mode-specific keys.
    """
    seen: dict = {}
    run: dict = {}
    net: dict = {}
    raw_net: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("syntax", f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if not key or not value:
            raise ConfigError("syntax", f"empty key or value in {raw.strip()!r}", lineno)
        if key in seen:
            raise ConfigError("duplicate_key", f"key {key!r} already set on line {seen[key]}",
                              lineno)
        seen[key] = lineno
        if key in _UNITLESS_ALIASES:
            raise ConfigError("unit_violation", f"{key!r} has no unit; use "
                              f"{_UNITLESS_ALIASES[key]!r}", lineno)
        spec = NETWORK_KEYS.get(key) or RUN_KEYS.get(key)
        if spec is None:
            raise ConfigError("unknown_key", f"unknown key {key!r}", lineno)
        try:
            v = spec.parse(value)
            if spec.check is not None:
                v = spec.check(v)
        except ValueError as exc:
            kind = "unit_violation" if spec.check is not None and "violates" in str(exc) else "syntax"
            raise ConfigError(kind, f"{key}: {exc}", lineno) from None
        if key in NETWORK_KEYS:
            net[spec.field] = spec.to_si(v) if spec.to_si else v
            raw_net[key] = value
        else:
            run[spec.field] = v

    for k, v in (overrides or {}).items():
        if v is not None:
            run[k] = v
    if "mode" not in run:
        raise ConfigError("missing_field", "mode is required (in the document or --mode)")
    preset = run.get("preset", "baseline")
    try:
        params = _base_params(preset).with_(**net)
    except (ValueError, TypeError) as exc:
        raise ConfigError("unit_violation", str(exc)) from None
    cfg = RunConfig(params=params, overrides=raw_net, **run)
    _check_mode(cfg, seen)
    return cfg


def _check_mode(cfg: RunConfig, seen: dict):
    if cfg.threshold_max_db <= cfg.threshold_min_db:
        raise ConfigError("unit_violation", "threshold_max_db must exceed threshold_min_db",
                          seen.get("threshold_max_db"))
    if cfg.rate_max_bps <= cfg.rate_min_bps:
        raise ConfigError("unit_violation", "rate_max_bps must exceed rate_min_bps",
                          seen.get("rate_max_bps"))
    if cfg.mode == "sweep":
        for key in ("sweep_variable", "sweep_values"):
            if getattr(cfg, key) is None:
                raise ConfigError("missing_field", f"sweep mode requires {key}")
        spec = NETWORK_KEYS[cfg.sweep_variable]
        for v in cfg.sweep_values:
            if spec.check is not None:
                try:
                    spec.check(v)
                except ValueError as exc:
                    raise ConfigError("unit_violation", f"sweep_values: {exc}",
                                      seen.get("sweep_values")) from None
    if cfg.mode in ("analytic", "validate", "sweep") and cfg.scheme == "SM":
        raise ConfigError("unit_violation", f"mode {cfg.mode} has no analytic model for SM",
                          seen.get("scheme"))
    if cfg.mode == "compare" and cfg.scheme != "MU":
        raise ConfigError("unit_violation", "compare mode evaluates MU against compare_with",
                          seen.get("scheme"))


# execution -------------------------------------------------------------

def _analytic_params(cfg: RunConfig) -> NetworkParams:
    return cfg.params.with_(u_max=1) if cfg.scheme == "SU" else cfg.params


def _laplace_modes(cfg: RunConfig, params: NetworkParams) -> tuple:
    mode = cfg.laplace
    if mode == "auto":
        if not cfg.interference:
            return ("none",)
        mode = "single" if params.eta_los == params.eta_nlos == 1 else "bounds"
    return ("lower", "upper") if mode == "bounds" else (mode,)


def _write_csv(path: Path, curve: CoverageCurve):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    lo, hi = curve.ci_low, curve.ci_high
    for i, (t, v) in enumerate(zip(curve.thresholds, curve.values)):
        row = [repr(float(t)), repr(float(v)), "", ""]
        if lo is not None and hi is not None:
            row[2:] = [repr(float(lo[i])), repr(float(hi[i]))]
        w.writerow(row)
    path.write_text(buf.getvalue())


def _write_table(path: Path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(x)) for x in r])
    path.write_text(buf.getvalue())


class _Outputs:
    def __init__(self, cfg: RunConfig, out: Path, digest: str):
        self.cfg, self.out, self.digest = cfg, out, digest
        self.files = []

    def name(self, scheme: str, curve: str) -> Path:
        return self.out / f"{self.cfg.mode}_{scheme}-{curve}_{self.digest}.csv"

    def curve(self, scheme, tag, curve):
        p = self.name(scheme, tag)
        _write_csv(p, curve)
        self.files.append(p.name)

    def table(self, scheme, tag, header, rows):
        p = self.name(scheme, tag)
        _write_table(p, header, rows)
        self.files.append(p.name)


def _run_analytic(cfg, outs):
    params = _analytic_params(cfg)
    stats = {}
    for lap in _laplace_modes(cfg, params):
        tag = "" if lap in ("none", "single") else f"-{lap}"
        sc = sinr_curve(params, cfg.threshold_grid, laplace=lap)
        rc = rate_curve(params, cfg.rate_grid, laplace=lap)
        outs.curve(cfg.scheme, "sinr" + tag, sc)
        outs.curve(cfg.scheme, "rate" + tag, rc)
        stats[lap] = dict(coverage_at_0db=float(np.interp(0.0, sc.thresholds, sc.values)))
    return stats


def _run_simulate(cfg, outs):
    res = run_experiment(cfg.plan())
    for tag, curve in res.curves.items():
        outs.curve(cfg.scheme, tag, curve)
    return dict(res.meta)


def _run_validate(cfg, outs):
    params = _analytic_params(cfg)
    res = run_experiment(cfg.plan())
    outs.curve(cfg.scheme, "sinr-sim", res.sinr)
    stats = dict(simulation=dict(res.meta))
    laps = _laplace_modes(cfg, params)
    curves = {}
    for lap in laps:
        curves[lap] = sinr_curve(params, cfg.threshold_grid, laplace=lap)
        tag = "sinr-analytic" if len(laps) == 1 else f"sinr-{lap}"
        outs.curve(cfg.scheme, tag, curves[lap])
    if len(laps) == 1:
        gap = np.abs(curves[laps[0]].values - res.sinr.values)
        stats["max_gap"] = float(gap.max())
        stats["max_gap_threshold_db"] = float(cfg.threshold_grid[int(gap.argmax())])
    else:
        rows = {}
        for q in BOUND_LEVELS:
            try:
                rows[str(q)] = dict(sim_minus_lower_db=horizontal_gap(res.sinr, curves["lower"], q),
                                    upper_minus_sim_db=horizontal_gap(curves["upper"], res.sinr, q))
            except ValueError:
                rows[str(q)] = None
        stats["bound_gaps"] = rows
    return stats


def _run_compare(cfg, outs):
    mu = cfg.params
    other = power_normalized_params(mu, scheme=cfg.compare_with, n_ue_sm=cfg.n_ue_sm)
    grid = cfg.rate_grid
    if cfg.compare_metric == "per_user" and cfg.compare_with == "SU":
        ca, cb = rate_curve(mu, grid), rate_curve(other, grid)
        engines = "analytic/analytic"
    else:
        key = "rate" if cfg.compare_metric == "per_user" else "sumrate"
        if cfg.compare_metric == "per_user":
            ca = rate_curve(mu, grid)
            engines = "analytic/simulation"
        else:
            ca = run_experiment(cfg.plan(mu, "MU")).curves[key]
            engines = "simulation/simulation"
        cb = run_experiment(cfg.plan(other, cfg.compare_with, seed=cfg.seed + 1)).curves[key]
    outs.curve("MU", cfg.compare_metric, ca)
    outs.curve(cfg.compare_with, cfg.compare_metric, cb)
    table = compare_curves(ca, cb, ("MU", cfg.compare_with), cfg.percentiles)
    outs.table(f"MU-vs-{cfg.compare_with}", "efficiency", ("p", "o", "rate_a_bps", "rate_b_bps"),
               [(r["p"], r["o"], r["rate_a"], r["rate_b"]) for r in table.rows()])
    return dict(engines=engines, comparand_digest=other.digest(),
                o={str(p): _json_num(o) for p, o in zip(table.percentiles, table.o_values)})


def _run_sweep(cfg, outs):
    spec = NETWORK_KEYS[cfg.sweep_variable]
    tau = 10.0 ** (cfg.sweep_threshold_db / 10.0)
    base = _analytic_params(cfg)
    laps = _laplace_modes(cfg, base)
    rows = []
    if spec.field == "lambda_bs":
        lams = [spec.to_si(v) for v in cfg.sweep_values]
        eng = engine_for(base, lams)
        for v, lam in zip(cfg.sweep_values, lams):
            rows.append([v] + [float(eng.coverage_avg(tau, lam, lap)) for lap in laps])
    else:
        for v in cfg.sweep_values:
            p = base.with_(**{spec.field: spec.to_si(v) if spec.to_si else v})
            eng = engine_for(p)
            rows.append([v] + [float(eng.coverage_avg(tau, laplace=lap)) for lap in laps])
    header = [cfg.sweep_variable] + [f"coverage_{lap}" for lap in laps]
    outs.table(cfg.scheme, "sweep", header, rows)
    arr = np.array(rows)
    best = {lap: float(arr[int(np.argmax(arr[:, i + 1])), 0]) for i, lap in enumerate(laps)}
    return dict(threshold_db=cfg.sweep_threshold_db, argmax=best)


_RUNNERS = dict(analytic=_run_analytic, simulate=_run_simulate, validate=_run_validate,
                compare=_run_compare, sweep=_run_sweep)


def _json_num(x):
    x = float(x)
    return x if math.isfinite(x) else str(x)


def execute(cfg: RunConfig, out_dir: str | Path | None = None) -> dict:
    """Run a configuration, write its files and return the summary record."""
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    digest = cfg.params.digest()
    outs = _Outputs(cfg, out, digest)
    start = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        stats = _RUNNERS[cfg.mode](cfg, outs)
    summary = dict(
        status="ok",
        mode=cfg.mode,
        scheme=cfg.scheme,
        params_digest=digest,
        params={k: (v if not isinstance(v, float) or math.isfinite(v) else str(v))
                for k, v in cfg.params.to_dict().items()},
        config=cfg.text(),
        versions=dict(mmwcov=__version__, numpy=np.__version__, scipy=scipy.__version__,
                      python=sys.version.split()[0]),
        wall_time_s=time.perf_counter() - start,
        warnings=sorted({str(w.message) for w in caught}),
        outputs=outs.files,
        results=stats,
    )
    path = out / f"summary_{cfg.mode}_{cfg.scheme}_{digest}.json"
    path.write_text(json.dumps(summary, indent=2, default=_json_num) + "\n")
    summary["summary_file"] = path.name
    return summary


def defaults_text() -> str:
    """Baseline defaults as a run document."""
    p = NetworkParams()
    vals = dict(f_c_ghz=p.f_c / 1e9, bandwidth_mhz=p.bandwidth / 1e6, p_los=p.p_los, d_m=p.D,
                alpha_los=p.alpha_los, alpha_nlos=p.alpha_nlos, xi_los_db=p.xi_los,
                xi_nlos_db=p.xi_nlos, lambda_bs_per_km2=p.lambda_bs / PER_KM2,
                lambda_ue_per_km2=p.lambda_ue / PER_KM2,
                p_tx_dbm=10.0 * math.log10(p.p_tx) + 30.0, n_bs=p.n_bs, n_ue=p.n_ue,
                eta_los=p.eta_los, eta_nlos=p.eta_nlos, u_max=p.u_max, n_s=p.n_s,
                noise_figure_db=p.noise_figure, omega=p.omega, nu=p.nu,
                sim_window_radius_m=p.sim_window_radius,
                equiprobable_angles=p.equiprobable_angles)
    lines = ["# network (baseline defaults)"]
    lines += [f"{k} = {_format(round(v, 10) if isinstance(v, float) else v)}" for k, v in vals.items()]
    lines.append(f"# sidelobes default to rho_bs = {p.rho_bs:.6g}, rho_ue = {p.rho_ue:.6g}")
    return "\n".join(lines) + "\n"


def _read_config(path: str) -> str:
    text = Path(path).read_text()
    if path.endswith(".json"):
        return json.loads(text)["config"]
    return text


def _parser():
    ap = argparse.ArgumentParser(prog="mmwcov", description=__doc__.splitlines()[0])
    ap.add_argument("--print-defaults", action="store_true",
                    help="print the default network parameters as a config document")
    sub = ap.add_subparsers(dest="command")
    run = sub.add_parser("run", help="execute a configuration")
    run.add_argument("--config", required=True,
                     help="config document, or a summary JSON from an earlier run")
    run.add_argument("--mode", choices=MODES)
    run.add_argument("--seed", type=int)
    run.add_argument("--trials", type=int)
    run.add_argument("--out", help="output directory (overrides output_dir)")
    return ap


def main(argv=None) -> int:
    ap = _parser()
    args = ap.parse_args(argv)
    if args.print_defaults:
        sys.stdout.write(defaults_text())
        return 0
    if args.command != "run":
        ap.print_help(sys.stderr)
        return 2
    try:
        if args.seed is not None and args.seed < 0:
            raise ConfigError("unit_violation", "--seed must be non-negative")
        if args.trials is not None and args.trials < 1:
            raise ConfigError("unit_violation", "--trials must be positive")
        cfg = parse_config(_read_config(args.config),
                           dict(mode=args.mode, seed=args.seed, trials=args.trials))
    except ConfigError as exc:
        print(json.dumps(dict(status="error", **exc.record())), file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError) as exc:
        print(json.dumps(dict(status="error", error="io", message=str(exc), line=None)),
              file=sys.stderr)
        return 2
    try:
        summary = execute(cfg, args.out)
    except Exception as exc:  # any pipeline failure becomes an error record
        record = dict(status="error", error=type(exc).__name__, message=str(exc), line=None)
        print(json.dumps(record), file=sys.stderr)
        return 1
    print(json.dumps(dict(status="ok", summary=summary["summary_file"],
                          outputs=summary["outputs"])))
    return 0
