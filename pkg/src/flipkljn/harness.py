"""Monte Carlo experiments over long Flip-KLJN / classical KLJN sessions.

A run of ``exchanges`` steps is cut into fixed-size shards. Each shard starts
from matched Normal/Normal states and owns the random streams keyed on
``(master_seed, shard_index, stream)``, so the result does not depend on how
shards are spread over worker processes. Shards reduce to integer tallies,
which merge by addition.
"""

from __future__ import annotations

import logging
import math
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import analytics
from .engine import SessionSetup, SessionTrace, draw_inputs, simulate_session
from .eve import EveModel
from .exceptions import ConfigurationError
from .noise import Channel, MeasurementChannel, NoiseEnvironment, build_environment, derive_rng
from .protocol import DetectorKind, Scheme, ThresholdSet, invalid_mismatch_transition
from .thresholds import ThresholdCache, resolve_thresholds

log = logging.getLogger(__name__)

SHARD_SIZE = 1 << 17
BLOCK_SIZE = 1 << 13


@dataclass(frozen=True)
class ExperimentConfig:
    scheme: Scheme = Scheme.FLIP
    detector: DetectorKind = DetectorKind.VOLTAGE_ONLY
    alpha: float = 10.0
    N: int = 100
    exchanges: int = 100_000
    master_seed: int = 0
    thresholds: ThresholdSet | None = None  # None: tune via the optimizer
    snr_db_v: float | None = None
    snr_db_i: float | None = None
    eve: EveModel = EveModel.NONE
    k: float = 1.38e-23
    T: float = 300.0
    delta_f: float = 1e6
    R_L: float = 1000.0
    exact_estimates: bool = False

    def environment(self) -> NoiseEnvironment:
        return build_environment(self.k, self.T, self.delta_f, self.R_L, self.alpha)

    def validate(self) -> "ExperimentConfig":
        self.environment()
        if self.exchanges < 1:
            raise ConfigurationError(f"exchanges={self.exchanges} must be >= 1")
        if self.N < 1:
            raise ConfigurationError(f"N={self.N} must be >= 1")
        for name in ("snr_db_v", "snr_db_i"):
            v = getattr(self, name)
            if v is not None and not math.isfinite(v):
                raise ConfigurationError(f"{name}={v} must be finite")
        if self.thresholds is not None:
            self.thresholds.validate(self.alpha, need_current=self.detector.uses_current)
        return self

    def resolved(self, cache: ThresholdCache | None = None) -> "ExperimentConfig":
        """Copy with thresholds filled in (tuned on a cache miss) and validated."""
        self.validate()
        if self.thresholds is None:
            th = resolve_thresholds(self.alpha, self.N, self.detector, cache)
            return replace(self, thresholds=th).validate()
        return self

    def setup(self) -> SessionSetup:
        channels = {
            Channel.VOLTAGE: MeasurementChannel(Channel.VOLTAGE, self.snr_db_v),
            Channel.CURRENT: MeasurementChannel(Channel.CURRENT, self.snr_db_i),
        }
        return SessionSetup(
            env=self.environment(),
            detector=self.detector,
            thresholds=self.thresholds,
            N=self.N,
            scheme=self.scheme,
            channels=channels,
            eve=self.eve,
            exact_estimates=self.exact_estimates,
        )


@dataclass
class Tally:
    """Integer counters of a set of exchanges; merges by addition."""

    exchanges: int = 0
    accepted: int = 0
    errors: int = 0
    flagged: int = 0
    normal_occupancy: int = 0
    mismatched: int = 0
    invalid_transitions: int = 0
    episodes: int = 0
    episode_length_total: int = 0
    episode_hist: Counter = field(default_factory=Counter)
    blocks: int = 0
    block_e: int = 0
    block_a: int = 0
    block_ee: int = 0
    block_aa: int = 0
    block_ea: int = 0
    eve_bits: int = 0
    eve_correct: int = 0
    eve_nonint_bits: int = 0
    eve_nonint_correct: int = 0

    def __iadd__(self, other: "Tally") -> "Tally":
        for f in fields(self):
            setattr(self, f.name, getattr(self, f.name) + getattr(other, f.name))
        return self


def binomial_ci(errors: int, trials: int, z: float = 1.96) -> tuple[float, float]:
    """Normal-approximation interval clamped to [0, 1]; rule of three when errors == 0."""
    if trials < 1 or not 0 <= errors <= trials:
        raise ValueError(f"need 0 <= errors <= trials and trials >= 1, got {errors}/{trials}")
    if errors == 0:
        return 0.0, min(1.0, 3.0 / trials)
    p = errors / trials
    half = z * math.sqrt(p * (1.0 - p) / trials)
    return max(0.0, p - half), min(1.0, p + half)


@dataclass(frozen=True)
class EpisodeStats:
    count: int
    mean_length: float | None
    histogram: dict[int, int]


def _episodes(trace: SessionTrace) -> tuple[np.ndarray, np.ndarray]:
    """Complete mismatch episodes as (start, length in accepted exchanges)."""
    mism = (trace.S_A_prev != trace.S_B_prev).astype(np.int8)
    if not mism.any():
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    edges = np.diff(np.concatenate(([0], mism, [0])))
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)
    # A run that reaches the end of the trace is complete only if it realigned there.
    T = len(mism)
    complete = (ends < T) | (trace.S_A_next[-1] == trace.S_B_next[-1])
    acc = np.concatenate(([0], np.cumsum(trace.accepted, dtype=np.int64)))
    lengths = acc[ends] - acc[starts]
    return starts[complete], lengths[complete]


def mismatch_episode_stats(trace: SessionTrace) -> EpisodeStats:
    _, lengths = _episodes(trace)
    hist = {int(k): int(v) for k, v in zip(*np.unique(lengths, return_counts=True))}
    mean = float(lengths.mean()) if len(lengths) else None
    return EpisodeStats(len(lengths), mean, hist)


def tally_trace(trace: SessionTrace) -> Tally:
    acc = trace.accepted
    err = (trace.error_A & acc).astype(np.int64) + (trace.error_B & acc)
    t = Tally(
        exchanges=len(trace),
        accepted=int(acc.sum()),
        errors=int(err.sum()),
        flagged=int((trace.flag_A | trace.flag_B).sum()),
        normal_occupancy=int((trace.S_A_prev == 0).sum()),
        mismatched=int((trace.S_A_prev != trace.S_B_prev).sum()),
        invalid_transitions=int(
            invalid_mismatch_transition(trace.S_A_prev, trace.S_B_prev, trace.S_A_next, trace.S_B_next, trace.b_A, trace.b_B, trace.d_A, trace.d_B).sum()
        ),
    )
    _, lengths = _episodes(trace)
    t.episodes = len(lengths)
    t.episode_length_total = int(lengths.sum())
    t.episode_hist = Counter({int(k): int(v) for k, v in zip(*np.unique(lengths, return_counts=True))})
    nb = -(-len(trace) // BLOCK_SIZE)
    edges = np.arange(nb) * BLOCK_SIZE
    be = np.add.reduceat(err, edges).astype(object)
    ba = (2 * np.add.reduceat(acc.astype(np.int64), edges)).astype(object)
    t.blocks, t.block_e, t.block_a = nb, int(be.sum()), int(ba.sum())
    t.block_ee, t.block_aa, t.block_ea = int((be * be).sum()), int((ba * ba).sum()), int((be * ba).sum())
    if trace.eve_guess is not None:
        hit = trace.eve_guess == trace.b_A
        nonint = ~trace.intermediate
        t.eve_bits = int(acc.sum())
        t.eve_correct = int((hit & acc).sum())
        t.eve_nonint_bits = int(nonint.sum())
        t.eve_nonint_correct = int((hit & nonint).sum())
    return t


def run_shard(config: ExperimentConfig, shard: int, size: int) -> Tally:
    setup = config.setup()
    rngs = {s: derive_rng(config.master_seed, shard, s) for s in range(4)}
    return tally_trace(simulate_session(setup, draw_inputs(setup, size, rngs)))


def simulate_trace(config: ExperimentConfig, shard: int = 0, size: int | None = None) -> SessionTrace:
    """Full per-exchange trace of one shard (for inspection and tests)."""
    config = config.resolved()
    setup = config.setup()
    rngs = {s: derive_rng(config.master_seed, shard, s) for s in range(4)}
    return simulate_session(setup, draw_inputs(setup, size or config.exchanges, rngs))


def _shard_job(args):
    config, shard, size = args
    return run_shard(config, shard, size)


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    ber: float
    ber_ci: tuple[float, float]
    ber_sigma: float
    errors: int
    bit_decisions: int
    accepted_fraction: float
    discarded_percentage: float
    mismatch_episode_count: int
    mean_episode_length: float | None
    episode_histogram: dict[int, int]
    eve_accuracy_overall: float | None
    eve_accuracy_nonintermediate: float | None
    eve_nonintermediate_bits: int
    state_occupancy: float
    invalid_transitions: int
    analytic_pb: float | None
    runtime_seconds: float
    tally: Tally = field(repr=False, default=None)

    @property
    def seed(self) -> int:
        return self.config.master_seed


def analytic_reference(config: ExperimentConfig) -> float | None:
    """Closed-form BER for the voltage-only detector on ideal channels, else None."""
    if config.detector is not DetectorKind.VOLTAGE_ONLY or config.snr_db_v is not None or config.thresholds is None:
        return None
    inputs = analytics.AnalyticInputs(config.alpha, config.thresholds.beta, config.thresholds.kappa, config.N)
    if config.scheme is Scheme.FLIP:
        return analytics.total_bep(inputs)
    return analytics.classical_accepted_ber(inputs)


def _batch_sigma(t: Tally) -> float:
    if t.blocks < 2 or t.block_a == 0:
        return float("nan")
    r = t.block_e / t.block_a
    abar = t.block_a / t.blocks
    ss = t.block_ee - 2 * r * t.block_ea + r * r * t.block_aa
    return math.sqrt(max(ss, 0.0) / (t.blocks * (t.blocks - 1))) / abar


def report_from_tally(config: ExperimentConfig, t: Tally, runtime: float = 0.0) -> ExperimentReport:
    bits = 2 * t.accepted
    ber = t.errors / bits if bits else float("nan")
    return ExperimentReport(
        config=config,
        ber=ber,
        ber_ci=binomial_ci(t.errors, bits) if bits else (float("nan"), float("nan")),
        ber_sigma=_batch_sigma(t),
        errors=t.errors,
        bit_decisions=bits,
        accepted_fraction=t.accepted / t.exchanges,
        discarded_percentage=100.0 * (1.0 - t.accepted / t.exchanges),
        mismatch_episode_count=t.episodes,
        mean_episode_length=t.episode_length_total / t.episodes if t.episodes else None,
        episode_histogram=dict(sorted(t.episode_hist.items())),
        eve_accuracy_overall=t.eve_correct / t.eve_bits if t.eve_bits else None,
        eve_accuracy_nonintermediate=t.eve_nonint_correct / t.eve_nonint_bits if t.eve_nonint_bits else None,
        eve_nonintermediate_bits=t.eve_nonint_bits,
        state_occupancy=t.normal_occupancy / t.exchanges,
        invalid_transitions=t.invalid_transitions,
        analytic_pb=analytic_reference(config),
        runtime_seconds=runtime,
        tally=t,
    )


def run_trials(config: ExperimentConfig, workers: int = 1, cache: ThresholdCache | None = None) -> ExperimentReport:
    start = time.perf_counter()
    config = config.resolved(cache)
    jobs = []
    for shard, lo in enumerate(range(0, config.exchanges, SHARD_SIZE)):
        jobs.append((config, shard, min(SHARD_SIZE, config.exchanges - lo)))
    total = Tally()
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for t in pool.map(_shard_job, jobs):
                total += t
    else:
        for job in jobs:
            total += _shard_job(job)
    report = report_from_tally(config, total, time.perf_counter() - start)
    log.info(
        "%s/%s alpha=%g N=%d: ber=%.3e accepted=%.4f (%d exchanges, %.1fs)",
        config.scheme.value, config.detector.value, config.alpha, config.N,
        report.ber, report.accepted_fraction, config.exchanges, report.runtime_seconds,
    )
    return report
