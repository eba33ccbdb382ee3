"""Command-line entry point.

Every option can also come from a flat ``key = value`` file given with
``--config`` (``#`` starts a comment; keys are the long flag names with
dashes or underscores). Flags override file values.

Exit codes: 0 success, 2 usage error, 3 unreadable config file, 4 invalid
parameter, 5 output failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import analytics
from .eve import EveModel
from .exceptions import ConfigurationError, DomainError
from .harness import ExperimentConfig, run_trials
from .presets import PresetId, get_preset, run_figure_preset
from .protocol import DetectorKind, Scheme, ThresholdSet
from .report import OutputFormat, ReportIOError, emit_report, format_float
from .thresholds import (
    DEFAULT_TRIALS,
    Objective,
    OptimizationProblem,
    ThresholdCache,
    optimize_current_thresholds,
    optimize_voltage_thresholds,
    resolve_thresholds,
)

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_PARAM, EXIT_IO = 0, 2, 3, 4, 5
SEED_ENV = "FLIPKLJN_SEED"
CACHE_NAME = "thresholds.csv"

log = logging.getLogger("flipkljn")


class ConfigFileError(Exception):
    pass


class ParameterError(Exception):
    pass


def read_config_file(path: str | Path) -> dict[str, str]:
    try:
        text = Path(path).read_text()
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigFileError(f"cannot read config file {path}: {exc}") from exc
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigFileError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigFileError(f"{path}:{lineno}: empty key")
        values[key.replace("-", "_")] = value
    return values


# Option table: name -> (converter, default, help). Shared by flags and config keys.
def _choice(enum_cls):
    def conv(s):
        try:
            return enum_cls(s)
        except ValueError:
            allowed = ", ".join(e.value for e in enum_cls)
            raise ParameterError(f"{s!r} is not one of: {allowed}") from None
    conv.__name__ = enum_cls.__name__
    return conv


def _optional_float(s):
    if s in ("", "ideal", "none"):
        return None
    return float(s)


def _float_list(s):
    return tuple(float(x) for x in s.split(",") if x.strip())


def _bool(s):
    if isinstance(s, bool):
        return s
    if s.lower() in ("1", "true", "yes", "on"):
        return True
    if s.lower() in ("0", "false", "no", "off"):
        return False
    raise ParameterError(f"{s!r} is not a boolean")


EXPERIMENT_OPTIONS = {
    "scheme": (_choice(Scheme), Scheme.FLIP, "classical or flip"),
    "detector": (_choice(DetectorKind), DetectorKind.VOLTAGE_ONLY, "voltage, current, jvcd or selective"),
    "alpha": (float, 10.0, "resistance ratio R_H/R_L (> 1)"),
    "samples": (int, 100, "samples per variance estimate (N)"),
    "exchanges": (int, 100_000, "bit exchanges to simulate"),
    "beta": (_optional_float, None, "voltage threshold for own L (units of v_LL)"),
    "kappa": (_optional_float, None, "voltage threshold for own H (units of v_LL)"),
    "eta": (_optional_float, None, "current threshold for own H (units of i_HH)"),
    "xi": (_optional_float, None, "current threshold for own L (units of i_HH)"),
    "snr_db_v": (_optional_float, None, "voltage measurement SNR in dB (omit for ideal)"),
    "snr_db_i": (_optional_float, None, "current measurement SNR in dB (omit for ideal)"),
    "eve": (_choice(EveModel), EveModel.NONE, "eavesdropper model"),
    "boltzmann": (float, 1.38e-23, "Boltzmann constant (J/K)"),
    "temperature": (float, 300.0, "noise temperature (K)"),
    "bandwidth": (float, 1e6, "noise bandwidth (Hz)"),
    "r_low": (float, 1000.0, "low resistance (ohm)"),
}
COMMON_OPTIONS = {
    "seed": (int, None, f"master seed (default: ${SEED_ENV}, else 0)"),
    "format": (_choice(OutputFormat), OutputFormat.CSV, "csv or json-lines"),
    "workers": (int, None, "worker processes (default: CPU count)"),
    "no_cache": (_bool, False, "ignore and do not update the threshold cache"),
    "trials": (int, DEFAULT_TRIALS, "trial budget of the simulated threshold objective"),
}
FIGURE_OPTIONS = {
    "preset": (_choice(PresetId), None, "figure preset id"),
    "exchanges": (int, None, "exchanges per grid point (default: preset value)"),
    "alphas": (_float_list, None, "comma-separated alpha list for the SNR sweep"),
}
OPTIMIZE_OPTIONS = {
    "objective": (_choice(Objective), Objective.ANALYTIC, "voltage objective: analytic or simulated"),
}

SUBCOMMANDS = {
    "analytic": {k: EXPERIMENT_OPTIONS[k] for k in ("alpha", "samples", "beta", "kappa")}
    | {"exact": (_bool, False, "use the chi-square law instead of the Gaussian one"), "format": COMMON_OPTIONS["format"]},
    "simulate": EXPERIMENT_OPTIONS | COMMON_OPTIONS,
    "optimize": {k: EXPERIMENT_OPTIONS[k] for k in ("alpha", "samples", "detector")}
    | OPTIMIZE_OPTIONS
    | {k: COMMON_OPTIONS[k] for k in ("seed", "trials", "no_cache")},
    "figure": FIGURE_OPTIONS | {k: COMMON_OPTIONS[k] for k in ("seed", "format", "workers", "no_cache", "trials")},
}
FLAGS = {"no_cache", "exact"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flipkljn", description="Flip-KLJN bit exchange simulator and analytic toolkit.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, options in SUBCOMMANDS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", help="key = value file; flags override it")
        p.add_argument("--out", help="output file (default: stdout)")
        for key, (_, default, help_text) in options.items():
            flag = "--" + key.replace("_", "-")
            if key in FLAGS:
                p.add_argument(flag, dest=key, action="store_const", const="true", default=argparse.SUPPRESS, help=help_text)
            else:
                # Values stay strings here and go through the same converters as config files.
                p.add_argument(flag, dest=key, default=argparse.SUPPRESS, help=f"{help_text} [default: {_show(default)}]")
        if name == "simulate":
            p.add_argument("--exact-estimates", dest="exact_estimates", action="store_const", const="true", default=argparse.SUPPRESS,
                           help="replace variance estimates by the true levels")
    return parser


def _show(default):
    return getattr(default, "value", default)


def resolve_options(command: str, flags: dict, file_values: dict) -> dict:
    options = dict(SUBCOMMANDS[command])
    if command == "simulate":
        options["exact_estimates"] = (_bool, False, "")
    aliases = {"N": "samples", "preset_id": "preset", "output": "out"}
    merged = {}
    for key, value in file_values.items():
        key = aliases.get(key, key)
        if key in ("config", "out"):
            continue
        if key not in options:
            raise ConfigFileError(f"unknown config key {key!r} for '{command}'")
        merged[key] = value
    merged.update({k: v for k, v in flags.items() if k in options})
    out = {}
    for key, (conv, default, _) in options.items():
        if key not in merged:
            out[key] = default
            continue
        try:
            out[key] = conv(merged[key])
        except (ValueError, ParameterError) as exc:
            raise ParameterError(f"--{key.replace('_', '-')}: {exc}") from exc
    return out


def resolve_seed(value) -> int:
    if value is not None:
        return value
    env = os.environ.get(SEED_ENV)
    if env is None or env.strip() == "":
        return 0
    try:
        return int(env)
    except ValueError:
        raise ParameterError(f"{SEED_ENV}={env!r} is not an integer") from None


def _cache(opts: dict, out: str | None) -> ThresholdCache:
    if opts.get("no_cache") or out is None:
        return ThresholdCache()
    return ThresholdCache(Path(out).resolve().parent / CACHE_NAME)


def _write(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    try:
        Path(out).write_text(text)
    except OSError as exc:
        raise ReportIOError(f"cannot write {out}: {exc}") from exc


def _thresholds(opts: dict) -> ThresholdSet | None:
    keys = ("beta", "kappa", "eta", "xi")
    if all(opts[k] is None for k in keys):
        return None
    if opts["beta"] is None or opts["kappa"] is None:
        raise ParameterError("explicit thresholds need both --beta and --kappa")
    return ThresholdSet(opts["beta"], opts["kappa"], opts["eta"], opts["xi"])


def cmd_analytic(opts: dict, out: str | None) -> None:
    alpha, N = opts["alpha"], opts["samples"]
    if opts["beta"] is None or opts["kappa"] is None:
        res = optimize_voltage_thresholds(OptimizationProblem(alpha, N))
        beta, kappa = res.beta_star, res.kappa_star
    else:
        beta, kappa = opts["beta"], opts["kappa"]
    inputs = analytics.AnalyticInputs(alpha, beta, kappa, N)
    b = analytics.exact_breakdown(inputs) if opts["exact"] else analytics.breakdown(inputs)
    names = ["alpha", "N", "beta", "kappa"] + [f"p{i}" for i in range(1, 9)] + ["P_mm", "P_bm", "P_b"]
    values = [alpha, N, beta, kappa, *b.p, b.P_mm, b.P_bm, b.P_b]
    _write(_table(names, [values], opts["format"]), out)


def _table(names, rows, fmt: OutputFormat) -> str:
    def cell(v):
        return str(v) if isinstance(v, (int, str)) else format_float(v)

    if fmt is OutputFormat.JSONL:
        return "".join(json.dumps({n: (v if isinstance(v, (int, str)) or v is None else float(cell(v))) for n, v in zip(names, r)}) + "\n" for r in rows)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names)
    for r in rows:
        w.writerow(["" if v is None else cell(v) for v in r])
    return buf.getvalue()


def _experiment(opts: dict, seed: int) -> ExperimentConfig:
    return ExperimentConfig(
        scheme=opts["scheme"],
        detector=opts["detector"],
        alpha=opts["alpha"],
        N=opts["samples"],
        exchanges=opts["exchanges"],
        master_seed=seed,
        thresholds=_thresholds(opts),
        snr_db_v=opts["snr_db_v"],
        snr_db_i=opts["snr_db_i"],
        eve=opts["eve"],
        k=opts["boltzmann"],
        T=opts["temperature"],
        delta_f=opts["bandwidth"],
        R_L=opts["r_low"],
        exact_estimates=opts["exact_estimates"],
    )


def _workers(opts: dict) -> int:
    w = opts.get("workers")
    if w is None:
        return os.cpu_count() or 1
    if w < 1:
        raise ParameterError(f"--workers={w} must be >= 1")
    return w


def cmd_simulate(opts: dict, out: str | None) -> None:
    config = _experiment(opts, resolve_seed(opts["seed"])).validate()
    cache = _cache(opts, out)
    if config.thresholds is None:
        config = _with_thresholds(config, cache, opts)
    report = run_trials(config, workers=_workers(opts), cache=cache)
    if out is None:
        sys.stdout.write(emit_report([report], opts["format"]))
    else:
        emit_report([report], opts["format"], out)


def _with_thresholds(config: ExperimentConfig, cache: ThresholdCache, opts: dict) -> ExperimentConfig:
    th = resolve_thresholds(config.alpha, config.N, config.detector, cache, trials=opts["trials"])
    return replace(config, thresholds=th).validate()


def cmd_optimize(opts: dict, out: str | None) -> None:
    alpha, N, det = opts["alpha"], opts["samples"], opts["detector"]
    seed = resolve_seed(opts["seed"])
    problem = OptimizationProblem(alpha, N, opts["objective"], trials=opts["trials"], seed=seed)
    v = optimize_voltage_thresholds(problem)
    eta = xi = None
    if det.uses_current:
        c = optimize_current_thresholds(problem)
        eta, xi = c.eta_star, c.xi_star
    names = ["alpha", "N", "detector", "objective", "beta", "kappa", "eta", "xi", "objective_value", "evaluations"]
    row = [alpha, N, det.value, opts["objective"].value, v.beta_star, v.kappa_star, eta, xi, v.objective_value, v.evaluations]
    _write(_table(names, [row], OutputFormat.CSV), out)
    if not opts["no_cache"] and out is not None and opts["objective"] is Objective.ANALYTIC:
        _cache(opts, out).put(alpha, N, det, ThresholdSet(v.beta_star, v.kappa_star, eta, xi), v.objective_value)


def cmd_figure(opts: dict, out: str | None) -> None:
    if opts["preset"] is None:
        raise ParameterError("--preset is required (one of: " + ", ".join(p.value for p in PresetId) + ")")
    preset = get_preset(opts["preset"], opts["exchanges"], opts["alphas"])
    if preset.exchanges < 1:
        raise ParameterError(f"--exchanges={preset.exchanges} must be >= 1")
    seed = resolve_seed(opts["seed"])
    cache = _cache(opts, out)
    # Tune every grid point up front so the simulated objective uses --trials.
    for cfg in preset.configs(seed):
        cfg.validate()
        if cache.get(cfg.alpha, cfg.N, cfg.detector) is None:
            resolve_thresholds(cfg.alpha, cfg.N, cfg.detector, cache, trials=opts["trials"])
    reports = run_figure_preset(preset, seed, out, opts["format"], _workers(opts), cache)
    if out is None:
        sys.stdout.write(emit_report(reports, opts["format"]))


COMMANDS = {"analytic": cmd_analytic, "simulate": cmd_simulate, "optimize": cmd_optimize, "figure": cmd_figure}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config", "out", "verbose")}
    try:
        file_values = read_config_file(args.config) if args.config else {}
        out = args.out if args.out is not None else file_values.get("out") or file_values.get("output")
        opts = resolve_options(args.command, flags, file_values)
        COMMANDS[args.command](opts, out)
    except ConfigFileError as exc:
        print(f"flipkljn: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ParameterError, ConfigurationError, DomainError) as exc:
        print(f"flipkljn: invalid parameter: {exc}", file=sys.stderr)
        return EXIT_PARAM
    except ReportIOError as exc:
        print(f"flipkljn: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"flipkljn: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
