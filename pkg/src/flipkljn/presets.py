"""Parameter sweeps that regenerate the published figure datasets."""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

from .harness import ExperimentConfig, ExperimentReport, run_trials
from .protocol import DetectorKind, Scheme
from .report import OutputFormat, emit_report
from .thresholds import ThresholdCache

BOTH_SCHEMES = (Scheme.CLASSICAL, Scheme.FLIP)
SNR_GRID = (6.0, 8.0, 10.0, 12.0, 14.0, 16.0, 18.0, 20.0)
# Sample count for the measurement-noise sweeps, which is not given with them.
SNR_SAMPLES = 100


class PresetId(enum.Enum):
    FIG4 = "fig4_ber_vs_N"
    FIG5 = "fig5_ber_vs_alpha"
    FIG6 = "fig6_ber_vs_snr"
    FIG8 = "fig8_discard_vs_snr"


@dataclass(frozen=True)
class FigurePreset:
    id: PresetId
    schemes: tuple[Scheme, ...]
    detectors: tuple[DetectorKind, ...]
    alphas: tuple[float, ...]
    samples: tuple[int, ...]
    snrs: tuple[float | None, ...] = (None,)
    exchanges: int = 1_000_000

    def __post_init__(self):
        for name in ("schemes", "detectors", "alphas", "samples", "snrs"):
            if not getattr(self, name):
                raise ValueError(f"preset {self.id.value}: empty {name} grid")

    def configs(self, seed: int) -> list[ExperimentConfig]:
        """One configuration per row, ordered by scheme, detector, then grid point.

        Every row shares the master seed, so neighbouring grid points see
        common random numbers and the trends are not blurred by seed noise.
        """
        out = []
        for scheme, det, alpha, N, snr in itertools.product(
            self.schemes, self.detectors, self.alphas, self.samples, self.snrs
        ):
            out.append(
                ExperimentConfig(
                    scheme=scheme,
                    detector=det,
                    alpha=float(alpha),
                    N=int(N),
                    exchanges=self.exchanges,
                    master_seed=seed,
                    snr_db_v=snr,
                    snr_db_i=snr if det.uses_current else None,
                )
            )
        return out

    def echo(self, seed: int) -> list[str]:
        lines = [
            f"preset = {self.id.value}",
            f"seed = {seed}",
            f"exchanges = {self.exchanges}",
        ]
        if self.id is PresetId.FIG6:
            lines.append("alphas = " + ",".join(repr(float(a)) for a in self.alphas))
        return lines


def get_preset(preset_id: PresetId | str, exchanges: int | None = None, alphas: Sequence[float] | None = None) -> FigurePreset:
    """Build a preset; ``alphas`` applies to the SNR sweep only."""
    pid = PresetId(preset_id)
    jv = (DetectorKind.JVCD,)
    if pid is PresetId.FIG4:
        p = FigurePreset(pid, BOTH_SCHEMES, (DetectorKind.VOLTAGE_ONLY, DetectorKind.JVCD), (10.0,), (10, 15, 20, 25, 30, 40, 50, 60, 75, 100))
    elif pid is PresetId.FIG5:
        p = FigurePreset(pid, BOTH_SCHEMES, (DetectorKind.VOLTAGE_ONLY, DetectorKind.JVCD), (5.0, 6.0, 7.0, 8.0, 10.0, 12.0, 15.0), (100, 200))
    elif pid is PresetId.FIG6:
        p = FigurePreset(pid, BOTH_SCHEMES, jv, tuple(alphas) if alphas else (10.0,), (SNR_SAMPLES,), SNR_GRID)
    else:
        p = FigurePreset(pid, BOTH_SCHEMES, jv, (10.0,), (SNR_SAMPLES,), SNR_GRID)
    if exchanges is not None:
        p = replace(p, exchanges=int(exchanges))
    return p


def run_figure_preset(
    preset: FigurePreset | PresetId | str,
    seed: int = 0,
    path: str | Path | None = None,
    fmt: OutputFormat | str = OutputFormat.CSV,
    workers: int = 1,
    cache: ThresholdCache | None = None,
) -> list[ExperimentReport]:
    """Sweep the preset grid and write one row per (scheme, detector, grid point)."""
    if not isinstance(preset, FigurePreset):
        preset = get_preset(preset)
    reports = [run_trials(cfg, workers=workers, cache=cache) for cfg in preset.configs(seed)]
    if path is not None:
        emit_report(reports, fmt, path, echo=preset.echo(seed))
    return reports
