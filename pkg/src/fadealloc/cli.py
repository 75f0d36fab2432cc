"""Command-line front end: sweeps written as CSV or JSON.

Power axes are given in dB on the command line and converted to linear
units once, here. ``inf`` is accepted for the PAPR and the SNR cap and
selects the unconstrained code paths.

Exit status: 0 on success, 2 for an invalid configuration, 3 when a
numerical routine fails.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .constellation import ConstellationError, LabeledConstellation, builtin, load_constellation
from .curve import InfoCurve, InputModel, UnachievableRateError, get_curve
from .delay_limited import (DEFAULT_THRESHOLD_DRAWS, InfeasibleError, PowerBudget,
                            min_power_alloc, outage_sweep, tw_min_power_alloc)
from .ergodic import capacity_of_policy, make_policy, optimize_beta
from .fading import FadingSpec

__all__ = ["RunConfig", "build_parser", "config_from_args", "validate", "run", "main",
           "OUTAGE_COLUMNS", "CAPACITY_COLUMNS", "CSV_SCHEMA_VERSION"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
CSV_SCHEMA_VERSION = 1

OUTAGE_COLUMNS = ("P_av_dB", "P_peak_dB", "outage", "ci95", "scheme", "B", "m", "R",
                  "PAPR_dB", "beta_dB", "n", "seed", "input", "shards", "low_confidence")
CAPACITY_COLUMNS = ("P_av_dB", "PAPR_dB", "policy", "beta_dB", "capacity_bits", "eta",
                    "quad_err", "input", "m")
BETA_SCAN_COLUMNS = ("P_av_dB", "PAPR_dB", "policy", "beta_dB", "capacity_bits", "best",
                     "input", "m")
CURVE_COLUMNS = ("rho_dB", "rho", "input", "info_bits", "mmse")
ALLOC_COLUMNS = ("block", "gain", "power", "snr", "eta", "scheme", "input", "R", "beta_dB")

COMMANDS = ("outage", "capacity", "curves", "alloc", "beta-scan")
DEFAULT_BETA_GRID = "-5:30:1"


class ConfigError(ValueError):
    """Invalid run configuration."""


@dataclass
class RunConfig:
    """Everything needed to reproduce one invocation."""

    command: str
    constellation: str = "qam16"
    model: str = "cm"
    m: float = 1.0
    B: int = 1
    R: float = 1.0
    pav_db: list[float] = field(default_factory=lambda: [0.0])
    papr_db: float = math.inf
    beta_db: float | None = None
    beta_scan: bool = False
    beta_grid_db: list[float] = field(default_factory=list)
    trials: int = 10**6
    threshold_trials: int = DEFAULT_THRESHOLD_DRAWS
    seed: int = 0
    shards: int = 1
    workers: int = 1
    scheme: str = "papr"
    policy: str = "opt"
    rho_db: list[float] = field(default_factory=list)
    gains: list[float] = field(default_factory=list)
    out: str | None = None
    format: str = "csv"


# ----------------------------------------------------------------------------
# parsing
# ----------------------------------------------------------------------------

def parse_db(text: str) -> float:
    """A dB value or the ``inf`` sentinel."""
    t = str(text).strip().lower()
    if t in ("inf", "+inf", "infinity"):
        return math.inf
    return float(t)


def parse_sweep(text: str) -> list[float]:
    """``start:stop:step`` (stop included), ``a,b,c`` or a single value."""
    t = str(text).strip()
    if ":" in t:
        parts = t.split(":")
        if len(parts) != 3:
            raise ConfigError(f"sweep {text!r} must be start:stop:step")
        a, b, step = (float(p) for p in parts)
        if not step > 0:
            raise ConfigError(f"sweep step must be positive in {text!r}")
        if b < a:
            return []
        count = int(math.floor((b - a) / step + 1e-9)) + 1
        return [round(a + k * step, 12) for k in range(count)]
    if not t:
        return []
    return [float(p) for p in t.split(",") if p.strip()]


def _parse_count(text: str) -> int:
    v = float(text)
    if v != int(v):
        raise argparse.ArgumentTypeError(f"{text!r} is not a whole number")
    return int(v)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fadealloc",
        description="Outage and ergodic capacity with power allocation over fading channels.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, power=True):
        p.add_argument("--constellation", default="qam16",
                       help="built-in name (bpsk, qpsk, psk8, qam16, qam64, qam256) or JSON file")
        p.add_argument("--model", default="cm", choices=("cm", "bicm", "gaussian"))
        p.add_argument("--out", default=None, help="output file (default: stdout)")
        p.add_argument("--format", default="csv", choices=("csv", "json"))
        if power:
            p.add_argument("-m", type=float, default=1.0, help="Nakagami m")
            p.add_argument("--pav-db", default="0", help="average power sweep start:stop:step")
            p.add_argument("--papr-db", default="inf", help="PAPR in dB or inf")
            p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("outage", help="outage probability versus average power")
    common(p)
    p.add_argument("-B", type=int, default=1, help="blocks per codeword")
    p.add_argument("-R", type=float, default=1.0, help="rate in bits per channel use")
    p.add_argument("--scheme", default="papr", choices=("papr", "peak", "av"))
    p.add_argument("--beta-db", default=None, help="truncated water-filling SNR cap (dB)")
    p.add_argument("--trials", type=_parse_count, default=10**6)
    p.add_argument("--threshold-trials", type=_parse_count, default=DEFAULT_THRESHOLD_DRAWS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--shards", type=int, default=1)

    for name, hlp in (("capacity", "ergodic capacity versus average power"),
                      ("beta-scan", "truncated water-filling capacity versus SNR cap")):
        p = sub.add_parser(name, help=hlp)
        common(p)
        p.add_argument("--policy", default="opt" if name == "capacity" else "tw",
                       choices=("opt", "tw", "uniform") if name == "capacity" else ("tw",))
        p.add_argument("--beta-db", default=None, help="SNR cap for the tw policy (dB)")
        p.add_argument("--beta-scan", action="store_true",
                       help="pick the best SNR cap per point from --beta-grid")
        p.add_argument("--beta-grid", default=DEFAULT_BETA_GRID, help="SNR caps in dB")

    p = sub.add_parser("curves", help="tabulate mutual information and MMSE")
    common(p, power=False)
    p.add_argument("--rho-db", default="-10:30:1")

    p = sub.add_parser("alloc", help="minimum-power allocation for given block gains")
    common(p, power=False)
    p.add_argument("--gains", required=True, help="comma-separated power gains")
    p.add_argument("-R", type=float, default=1.0)
    p.add_argument("--beta-db", default=None)
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    """Translate parsed arguments into a :class:`RunConfig`."""
    cfg = RunConfig(command=args.command, constellation=args.constellation, model=args.model,
                    out=args.out, format=args.format)
    try:
        if hasattr(args, "pav_db"):
            cfg.pav_db = parse_sweep(args.pav_db)
            cfg.papr_db = parse_db(args.papr_db)
            cfg.m = args.m
            cfg.workers = args.workers
        if getattr(args, "beta_db", None) is not None:
            cfg.beta_db = parse_db(args.beta_db)
        if args.command == "outage":
            cfg.B, cfg.R, cfg.scheme = args.B, args.R, args.scheme
            cfg.trials, cfg.threshold_trials = args.trials, args.threshold_trials
            cfg.seed, cfg.shards = args.seed, args.shards
        elif args.command in ("capacity", "beta-scan"):
            cfg.policy = args.policy
            cfg.beta_scan = args.beta_scan or args.command == "beta-scan"
            cfg.beta_grid_db = parse_sweep(args.beta_grid)
        elif args.command == "curves":
            cfg.rho_db = parse_sweep(args.rho_db)
        elif args.command == "alloc":
            cfg.gains = [float(g) for g in args.gains.split(",") if g.strip()]
            cfg.R = args.R
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


# ----------------------------------------------------------------------------
# validation
# ----------------------------------------------------------------------------

def _resolve_constellation(ref: str) -> LabeledConstellation:
    path = Path(ref)
    if path.suffix == ".json" or path.exists():
        return load_constellation(path)
    return builtin(ref)


def _input_model(cfg: RunConfig) -> InputModel:
    if cfg.model == "gaussian":
        return InputModel.gaussian()
    k = _resolve_constellation(cfg.constellation)
    return InputModel.cm(k) if cfg.model == "cm" else InputModel.bicm(k)


def validate(cfg: RunConfig) -> list[str]:
    """All problems with ``cfg``; empty iff :func:`run` would accept it."""
    problems = []
    if cfg.command not in COMMANDS:
        return [f"unknown command {cfg.command!r}"]
    if cfg.model not in ("cm", "bicm", "gaussian"):
        problems.append(f"unknown input model {cfg.model!r}")
    max_info = math.inf
    if cfg.model in ("cm", "bicm"):
        try:
            max_info = float(_resolve_constellation(cfg.constellation).M)
        except (ConstellationError, OSError, ValueError) as exc:
            problems.append(f"constellation: {exc}")
    if cfg.format not in ("csv", "json"):
        problems.append(f"unknown format {cfg.format!r}")

    if cfg.command in ("outage", "capacity", "beta-scan"):
        if not cfg.pav_db:
            problems.append("empty average-power sweep")
        elif not all(math.isfinite(p) for p in cfg.pav_db):
            problems.append("average powers must be finite")
        if not (cfg.m >= 0.5):
            problems.append(f"Nakagami m >= 0.5 required, got {cfg.m}")
        if math.isnan(cfg.papr_db) or cfg.papr_db < 0:
            problems.append(f"PAPR >= 1 required (PAPR_dB >= 0), got {cfg.papr_db} dB")
        if cfg.workers < 1:
            problems.append("workers must be >= 1")
    if cfg.beta_db is not None and math.isnan(cfg.beta_db):
        problems.append("beta must be a number or inf")

    if cfg.command in ("outage", "alloc"):
        if not cfg.R > 0:
            problems.append(f"rate must be positive, got {cfg.R}")
        elif cfg.R >= max_info:
            problems.append(f"rate exceeds input entropy ({cfg.R} >= {max_info:g} bits)")
    if cfg.command == "outage":
        if cfg.B < 1:
            problems.append(f"B >= 1 required, got {cfg.B}")
        if cfg.trials < 1 or cfg.threshold_trials < 1:
            problems.append("trial counts must be positive")
        if cfg.shards < 1:
            problems.append("shards must be >= 1")
        if cfg.seed < 0:
            problems.append("seed must be nonnegative")
        if cfg.scheme not in ("papr", "peak", "av"):
            problems.append(f"unknown scheme {cfg.scheme!r}")
        if cfg.scheme == "peak" and math.isinf(cfg.papr_db):
            problems.append("peak scheme needs a finite --papr-db (P_peak = PAPR * P_av)")
        if cfg.beta_db is not None and math.isfinite(cfg.beta_db) and cfg.model == "gaussian":
            if cfg.R >= math.log2(1 + 10 ** (cfg.beta_db / 10)):
                problems.append("rate exceeds the capped-SNR information log2(1 + beta)")
    if cfg.command in ("capacity", "beta-scan"):
        if cfg.policy not in ("opt", "tw", "uniform"):
            problems.append(f"unknown policy {cfg.policy!r}")
        if cfg.policy == "tw" and not cfg.beta_scan and cfg.beta_db is None:
            problems.append("tw policy needs --beta-db or --beta-scan")
        if cfg.beta_scan and not cfg.beta_grid_db:
            problems.append("empty beta grid")
        if cfg.beta_scan and cfg.policy != "tw":
            problems.append("--beta-scan applies to the tw policy only")
    if cfg.command == "curves" and not cfg.rho_db:
        problems.append("empty SNR sweep")
    if cfg.command == "alloc":
        if not cfg.gains:
            problems.append("no gains given")
        elif any(not (g >= 0) or not math.isfinite(g) for g in cfg.gains):
            problems.append("gains must be finite and nonnegative")
    return problems


# ----------------------------------------------------------------------------
# execution
# ----------------------------------------------------------------------------

def _db(x: float) -> float:
    return 10 ** (x / 10) if math.isfinite(x) else math.inf


def _todb(x: float) -> float:
    if x == 0:
        return -math.inf
    return 10 * math.log10(x) if math.isfinite(x) else math.inf


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return "" if v is None else str(v)


def _input_tag(curve: InfoCurve) -> str:
    model = curve.model
    if model.kind == "gaussian":
        return "gaussian"
    return f"{model.kind}:{model.constellation.name}:{model.constellation.digest()}"


def _run_outage(cfg: RunConfig, curve: InfoCurve) -> list[dict]:
    fading = FadingSpec(cfg.m, cfg.B)
    papr = _db(cfg.papr_db)
    beta = None if cfg.beta_db is None else _db(cfg.beta_db)
    pav = np.array([_db(p) for p in cfg.pav_db])
    res = outage_sweep(curve, cfg.R, fading, pav, papr, cfg.scheme, beta, cfg.trials,
                       cfg.seed, cfg.threshold_trials, cfg.shards, cfg.workers)
    tag = _input_tag(curve)
    rows = []
    for p_db, r in zip(cfg.pav_db, res):
        rows.append({
            "P_av_dB": p_db, "P_peak_dB": p_db + cfg.papr_db, "outage": r.p_hat,
            "ci95": r.ci95, "scheme": r.scheme, "B": cfg.B, "m": cfg.m, "R": cfg.R,
            "PAPR_dB": cfg.papr_db, "beta_dB": cfg.beta_db, "n": r.n, "seed": cfg.seed,
            "input": tag, "shards": cfg.shards, "low_confidence": r.low_confidence})
    return rows


def _capacity_point(cfg, curve, fading, p_db):
    budget = PowerBudget(_db(p_db), _db(cfg.papr_db))
    constrained = math.isfinite(cfg.papr_db)
    if cfg.policy == "uniform":
        pt = capacity_of_policy(make_policy("uniform", curve, fading, budget))
        return pt, None
    if cfg.policy == "opt":
        kind = "papr_opt" if constrained else "opt"
        return capacity_of_policy(make_policy(kind, curve, fading, budget)), None
    if cfg.beta_scan:
        choice = optimize_beta(curve, fading, budget, [_db(b) for b in cfg.beta_grid_db])
        return choice.point, choice
    kind = "papr_tw" if constrained else "tw"
    return capacity_of_policy(make_policy(kind, curve, fading, budget, _db(cfg.beta_db))), None


def _map_points(cfg, func):
    """Evaluate sweep points, possibly in a pool; results keep sweep order."""
    if cfg.workers > 1 and len(cfg.pav_db) > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            return list(pool.map(func, cfg.pav_db))
    return [func(p) for p in cfg.pav_db]


def _run_capacity(cfg: RunConfig, curve: InfoCurve) -> list[dict]:
    fading = FadingSpec(cfg.m)
    tag = _input_tag(curve)
    results = _map_points(cfg, lambda p: _capacity_point(cfg, curve, fading, p))
    rows = []
    for p_db, (pt, _) in zip(cfg.pav_db, results):
        pol = pt.policy
        beta_db = None if pol.beta is None else _todb(pol.beta)
        rows.append({"P_av_dB": p_db, "PAPR_dB": cfg.papr_db, "policy": pol.kind,
                     "beta_dB": beta_db, "capacity_bits": pt.C, "eta": pol.eta,
                     "quad_err": pt.quad_err, "input": tag, "m": cfg.m})
    return rows


def _run_beta_scan(cfg: RunConfig, curve: InfoCurve) -> list[dict]:
    fading = FadingSpec(cfg.m)
    tag = _input_tag(curve)
    grid = [_db(b) for b in cfg.beta_grid_db]

    def point(p_db):
        return optimize_beta(curve, fading, PowerBudget(_db(p_db), _db(cfg.papr_db)), grid)

    rows = []
    for p_db, choice in zip(cfg.pav_db, _map_points(cfg, point)):
        kind = choice.point.policy.kind
        for b_db, beta, cap in zip(cfg.beta_grid_db, choice.grid, choice.capacities):
            rows.append({"P_av_dB": p_db, "PAPR_dB": cfg.papr_db, "policy": kind,
                         "beta_dB": b_db, "capacity_bits": cap, "best": beta == choice.beta,
                         "input": tag, "m": cfg.m})
    return rows


def _run_curves(cfg: RunConfig) -> tuple[list[dict], list[InfoCurve]]:
    models = [cfg.model] if cfg.model == "gaussian" else ["cm", "bicm"]
    curves = []
    rows = []
    for name in models:
        curve = get_curve(_input_model(RunConfig("curves", cfg.constellation, name)))
        curves.append(curve)
        rho = np.array([_db(r) for r in cfg.rho_db])
        info, mmse = curve.info(rho), curve.mmse(rho)
        tag = _input_tag(curve)
        for r_db, r, i, e in zip(cfg.rho_db, rho, np.atleast_1d(info), np.atleast_1d(mmse)):
            rows.append({"rho_dB": r_db, "rho": float(r), "input": tag,
                         "info_bits": float(i), "mmse": float(e)})
    return rows, curves


def _run_alloc(cfg: RunConfig, curve: InfoCurve) -> list[dict]:
    g = np.array(cfg.gains)
    if cfg.beta_db is None:
        a = min_power_alloc(curve, g, cfg.R)
    else:
        a = tw_min_power_alloc(curve, g, cfg.R, _db(cfg.beta_db))
    tag = _input_tag(curve)
    return [{"block": b + 1, "gain": float(g[b]), "power": float(a.p[b]),
             "snr": float(a.p[b] * g[b]), "eta": a.eta, "scheme": a.scheme, "input": tag,
             "R": cfg.R, "beta_dB": cfg.beta_db} for b in range(g.size)]


_COLUMNS = {"outage": OUTAGE_COLUMNS, "capacity": CAPACITY_COLUMNS,
            "beta-scan": BETA_SCAN_COLUMNS, "curves": CURVE_COLUMNS, "alloc": ALLOC_COLUMNS}


def render(command: str, rows: list[dict], fmt: str) -> str:
    """Serialize rows with the fixed column order of ``command``."""
    cols = _COLUMNS[command]
    if fmt == "json":
        data = {"schema": f"{command}/{CSV_SCHEMA_VERSION}", "columns": list(cols),
                "rows": [[_fmt(r[c]) for c in cols] for r in rows]}
        return json.dumps(data, indent=1) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in cols])
    return buf.getvalue()


def _sidecar(cfg: RunConfig, curves: list[InfoCurve], wall: float) -> dict:
    return {"config": asdict(cfg), "version": __version__,
            "schema": f"{cfg.command}/{CSV_SCHEMA_VERSION}",
            "curves": {_input_tag(c): c.digest() for c in curves},
            "wall_time_s": wall}


def _describe(cfg: RunConfig) -> str:
    keys = {"outage": ("model", "constellation", "m", "B", "R", "papr_db", "scheme", "beta_db"),
            "capacity": ("model", "constellation", "m", "papr_db", "policy", "beta_db"),
            "beta-scan": ("model", "constellation", "m", "papr_db"),
            "curves": ("model", "constellation"),
            "alloc": ("model", "constellation", "R", "gains", "beta_db")}[cfg.command]
    return ", ".join(f"{k}={getattr(cfg, k)}" for k in keys)


def run(cfg: RunConfig, stdout=None) -> int:
    """Execute ``cfg``; returns the exit status.

    With ``cfg.out`` set, the table goes to that file and a sidecar
    ``<out>.meta.json`` records the configuration, library version, curve
    digests and wall time.
    """
    stdout = sys.stdout if stdout is None else stdout
    problems = validate(cfg)
    if problems:
        for msg in problems:
            print(f"fadealloc: config error: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    start = time.perf_counter()
    try:
        if cfg.command == "curves":
            rows, curves = _run_curves(cfg)
        else:
            curve = get_curve(_input_model(cfg))
            curves = [curve]
            runner = {"outage": _run_outage, "capacity": _run_capacity,
                      "beta-scan": _run_beta_scan, "alloc": _run_alloc}[cfg.command]
            rows = runner(cfg, curve)
    except (UnachievableRateError, InfeasibleError, ConstellationError) as exc:
        print(f"fadealloc: config error in {cfg.command} ({_describe(cfg)}): {exc}",
              file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, ValueError, FloatingPointError) as exc:
        print(f"fadealloc: numerical failure in {cfg.command} ({_describe(cfg)}): {exc}",
              file=sys.stderr)
        return EXIT_NUMERICAL
    wall = time.perf_counter() - start
    text = render(cfg.command, rows, cfg.format)
    if cfg.out:
        out = Path(cfg.out)
        out.write_text(text)
        meta = _sidecar(cfg, curves, wall)
        Path(str(out) + ".meta.json").write_text(json.dumps(meta, indent=1, default=_fmt) + "\n")
    else:
        stdout.write(text)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
    except ConfigError as exc:
        print(f"fadealloc: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
