"""Tabular output of experiment reports (CSV or JSON lines).

Each output file gets a sidecar ``<name>.config`` holding the resolved
configuration of every row as ``key = value`` lines, in the same format the
command line reads, so a file can be regenerated from its sidecar.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

from .harness import ExperimentConfig, ExperimentReport

COLUMNS = (
    "scheme", "detector", "alpha", "N", "beta", "kappa", "eta", "xi",
    "snr_db_v", "snr_db_i", "exchanges", "seed", "ber", "ber_ci_low",
    "ber_ci_high", "discarded_pct", "mismatch_episodes", "mean_episode_len",
    "eve_acc_overall", "eve_acc_nonintermediate", "analytic_pb",
)


class OutputFormat(enum.Enum):
    CSV = "csv"
    JSONL = "json-lines"


class ReportIOError(OSError):
    """Raised when an output or sidecar file cannot be written."""


def format_float(x) -> str:
    """Nine significant digits; empty for missing values."""
    if x is None:
        return ""
    x = float(x)
    if math.isnan(x):
        return "nan"
    return f"{x:.9g}"


def report_row(report: ExperimentReport) -> dict:
    c = report.config
    th = c.thresholds
    return {
        "scheme": c.scheme.value,
        "detector": c.detector.value,
        "alpha": c.alpha,
        "N": c.N,
        "beta": th.beta if th else None,
        "kappa": th.kappa if th else None,
        "eta": th.eta if th else None,
        "xi": th.xi if th else None,
        "snr_db_v": c.snr_db_v,
        "snr_db_i": c.snr_db_i,
        "exchanges": c.exchanges,
        "seed": c.master_seed,
        "ber": report.ber,
        "ber_ci_low": report.ber_ci[0],
        "ber_ci_high": report.ber_ci[1],
        "discarded_pct": report.discarded_percentage,
        "mismatch_episodes": report.mismatch_episode_count,
        "mean_episode_len": report.mean_episode_length,
        "eve_acc_overall": report.eve_accuracy_overall,
        "eve_acc_nonintermediate": report.eve_accuracy_nonintermediate,
        "analytic_pb": report.analytic_pb,
    }


def _render(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return format_float(value)
    return str(value)


def _json_value(value):
    if value is None or isinstance(value, (str, bool, int)):
        return value
    text = format_float(value)
    return None if text == "nan" else float(text)


def render_rows(rows: Sequence[dict], fmt: OutputFormat) -> str:
    if fmt is OutputFormat.CSV:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for row in rows:
            w.writerow([_render(row.get(k)) for k in COLUMNS])
        return buf.getvalue()
    return "".join(json.dumps({k: _json_value(row.get(k)) for k in COLUMNS}) + "\n" for row in rows)


def _exact(x) -> str:
    # Full precision so a rerun from the sidecar is bit-identical.
    return "" if x is None else repr(float(x))


def config_lines(config: ExperimentConfig) -> list[str]:
    th = config.thresholds
    pairs = [
        ("scheme", config.scheme.value),
        ("detector", config.detector.value),
        ("alpha", _exact(config.alpha)),
        ("samples", str(config.N)),
        ("exchanges", str(config.exchanges)),
        ("seed", str(config.master_seed)),
        ("beta", _exact(th.beta) if th else ""),
        ("kappa", _exact(th.kappa) if th else ""),
        ("eta", _exact(th.eta) if th else ""),
        ("xi", _exact(th.xi) if th else ""),
        ("snr_db_v", _exact(config.snr_db_v)),
        ("snr_db_i", _exact(config.snr_db_i)),
        ("eve", config.eve.value),
        ("boltzmann", repr(config.k)),
        ("temperature", repr(config.T)),
        ("bandwidth", repr(config.delta_f)),
        ("r_low", repr(config.R_L)),
    ]
    return [f"{k} = {v}" for k, v in pairs if v != ""]


def sidecar_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".config")


def emit_report(
    reports: Iterable[ExperimentReport],
    fmt: OutputFormat | str = OutputFormat.CSV,
    path: str | Path | None = None,
    echo: Sequence[str] | None = None,
) -> str:
    """Write the reports as one table (and a config sidecar); return the table text.

    With ``path=None`` nothing is written. ``echo`` holds the ``key = value``
    lines that regenerate the whole file (a figure preset, say); without it a
    single report's own configuration is used. Per-row configurations are
    appended as comments either way.
    """
    fmt = OutputFormat(fmt)
    reports = list(reports)
    text = render_rows([report_row(r) for r in reports], fmt)
    if path is None:
        return text
    side = [f"format = {fmt.value}"]
    if echo is not None:
        side.extend(echo)
    elif len(reports) == 1:
        side.extend(config_lines(reports[0].config))
    for i, r in enumerate(reports):
        side.append(f"# row {i + 1}: " + "; ".join(config_lines(r.config)))
    try:
        Path(path).write_text(text)
        sidecar_path(path).write_text("\n".join(side) + "\n")
    except OSError as exc:
        raise ReportIOError(f"cannot write {path}: {exc}") from exc
    return text
