import math

import numpy as np
import pytest
from scipy import stats

from flipkljn.eve import EveModel
from flipkljn.exceptions import ConfigurationError
from flipkljn.harness import (
    BLOCK_SIZE,
    SHARD_SIZE,
    ExperimentConfig,
    Tally,
    _episodes,
    analytic_reference,
    binomial_ci,
    mismatch_episode_stats,
    run_trials,
    simulate_trace,
)
from flipkljn.protocol import DetectorKind, Scheme, ThresholdSet


def clopper_pearson(k, n, level=0.95):
    a = 1 - level
    lo = stats.beta.ppf(a / 2, k, n - k + 1) if k > 0 else 0.0
    hi = stats.beta.ppf(1 - a / 2, k + 1, n - k) if k < n else 1.0
    return lo, hi


class TestBinomialCI:
    def test_zero_errors_rule_of_three(self):
        assert binomial_ci(0, 1000) == (0.0, 0.003)

    def test_symmetric_at_half(self):
        lo, hi = binomial_ci(500, 1000)
        assert 0.5 - lo == pytest.approx(hi - 0.5)

    def test_width_vs_clopper_pearson(self):
        lo, hi = binomial_ci(3, 100)
        elo, ehi = clopper_pearson(3, 100)
        assert abs((hi - lo) - (ehi - elo)) / (ehi - elo) < 0.30

    def test_clamped(self):
        lo, hi = binomial_ci(1, 10)
        assert lo == 0.0 and hi <= 1.0

    @pytest.mark.parametrize("k,n", [(-1, 10), (11, 10), (0, 0)])
    def test_invalid(self, k, n):
        with pytest.raises(ValueError):
            binomial_ci(k, n)


class TestConfig:
    def test_invalid_alpha(self):
        with pytest.raises(ConfigurationError, match="alpha"):
            ExperimentConfig(alpha=0.5).validate()

    def test_invalid_exchanges(self):
        with pytest.raises(ConfigurationError):
            ExperimentConfig(exchanges=0).validate()

    def test_bad_thresholds(self):
        with pytest.raises(ConfigurationError):
            ExperimentConfig(thresholds=ThresholdSet(2.5, 4.0)).validate()

    def test_jvcd_needs_current_thresholds(self):
        with pytest.raises(ConfigurationError):
            ExperimentConfig(detector=DetectorKind.JVCD, thresholds=ThresholdSet(1.4, 4.0)).validate()

    def test_resolved_fills_thresholds(self):
        cfg = ExperimentConfig(N=60).resolved()
        assert cfg.thresholds is not None and cfg.thresholds.eta is None


TH = ThresholdSet(1.35, 3.3, 1.35, 3.3)


class TestReportInvariants:
    @pytest.fixture(scope="class")
    @classmethod
    def report(cls):
        return run_trials(ExperimentConfig(detector=DetectorKind.JVCD, N=20, thresholds=TH, exchanges=300_000, master_seed=3))

    def test_error_count_consistent(self, report):
        assert report.ber * report.bit_decisions == pytest.approx(report.errors)
        assert report.bit_decisions == 2 * report.tally.accepted

    def test_discard_consistent(self, report):
        assert report.discarded_percentage == pytest.approx(100 * (1 - report.accepted_fraction))
        assert report.discarded_percentage > 0

    def test_no_invalid_transitions(self, report):
        assert report.invalid_transitions == 0

    def test_episode_histogram_sums(self, report):
        assert sum(report.episode_histogram.values()) == report.mismatch_episode_count
        total = sum(k * v for k, v in report.episode_histogram.items())
        assert total / report.mismatch_episode_count == pytest.approx(report.mean_episode_length)

    def test_batch_sigma_at_least_binomial(self, report):
        # Errors cluster in mismatch episodes, so the binomial sigma is too small.
        binom = math.sqrt(report.ber * (1 - report.ber) / report.bit_decisions)
        assert report.ber_sigma > binom


class TestNoiselessRuns:
    def test_flip_is_error_free(self):
        r = run_trials(ExperimentConfig(thresholds=TH, exchanges=50_000, exact_estimates=True))
        assert r.ber == 0 and r.discarded_percentage == 0 and r.mismatch_episode_count == 0
        assert r.mean_episode_length is None
        assert r.ber_ci == (0.0, 3 / r.bit_decisions)

    def test_classical_keeps_half(self):
        n = 200_000
        r = run_trials(ExperimentConfig(scheme=Scheme.CLASSICAL, thresholds=TH, exchanges=n, exact_estimates=True, master_seed=9))
        assert abs(r.accepted_fraction - 0.5) < 3 * math.sqrt(0.25 / n)
        assert r.ber == 0


class TestEpisodes:
    def test_counts_runs_of_mismatch(self):
        trace = simulate_trace(ExperimentConfig(N=10, thresholds=TH, exchanges=20_000, master_seed=1))
        starts, lengths = _episodes(trace)
        mism = trace.S_A_prev != trace.S_B_prev
        for s, n in zip(starts[:50], lengths[:50]):
            assert mism[s : s + n].all()
            assert s == 0 or not mism[s - 1]
            assert not mism[s + n] if s + n < len(mism) else True

    def test_censored_tail_dropped(self):
        trace = simulate_trace(ExperimentConfig(N=10, thresholds=TH, exchanges=20_000, master_seed=1))
        mism = trace.S_A_prev != trace.S_B_prev
        runs = np.flatnonzero(np.diff(np.concatenate(([0], mism.astype(int)))) == 1)
        stats_ = mismatch_episode_stats(trace)
        censored = int(trace.S_A_next[-1] != trace.S_B_next[-1])
        assert stats_.count == len(runs) - censored

    def test_lengths_count_accepted_exchanges(self):
        # JVCD discards inside an episode do not lengthen it.
        cfg = ExperimentConfig(detector=DetectorKind.JVCD, N=12, thresholds=TH, exchanges=30_000, master_seed=2)
        trace = simulate_trace(cfg)
        starts, lengths = _episodes(trace)
        mism = trace.S_A_prev != trace.S_B_prev
        raw = []
        for s in starts:
            e = s
            while e < len(mism) and mism[e]:
                e += 1
            raw.append(int(trace.accepted[s:e].sum()))
        assert lengths.tolist() == raw

    def test_noiseless_mean_is_two(self):
        # Exact estimates after a forced mismatch: realign on equal bits only.
        cfg = ExperimentConfig(N=10, thresholds=TH, exchanges=1, exact_estimates=True)
        from flipkljn.engine import draw_inputs, simulate_session
        from flipkljn.noise import derive_rng

        setup = cfg.setup()
        inputs = draw_inputs(setup, 100_000, {s: derive_rng(4, 0, s) for s in range(4)})
        lengths = []
        start = (0, 1)
        # Restart from a mismatch after every realignment.
        pos = 0
        while pos < 99_000:
            sub = type(inputs)(inputs.b_A[pos:pos + 64], inputs.b_B[pos:pos + 64])
            tr = simulate_session(setup, sub, initial=start)
            realigned = np.flatnonzero(tr.S_A_next == tr.S_B_next)
            lengths.append(int(realigned[0]) + 1)
            pos += lengths[-1]
        assert np.mean(lengths) == pytest.approx(2.0, abs=3 * math.sqrt(2 / len(lengths)))


class TestReproducibility:
    def test_workers_do_not_change_results(self):
        cfg = ExperimentConfig(detector=DetectorKind.SELECTIVE, N=30, thresholds=TH, exchanges=3 * SHARD_SIZE + 1234, master_seed=77)
        a = run_trials(cfg, workers=1)
        b = run_trials(cfg, workers=3)
        assert a.tally == b.tally

    def test_seed_changes_results(self):
        a = run_trials(ExperimentConfig(N=20, thresholds=TH, exchanges=50_000, master_seed=1))
        b = run_trials(ExperimentConfig(N=20, thresholds=TH, exchanges=50_000, master_seed=2))
        assert a.errors != b.errors

    def test_shards_restart_matched(self):
        cfg = ExperimentConfig(N=10, thresholds=TH, exchanges=SHARD_SIZE + 10)
        tr = simulate_trace(cfg, shard=1, size=10)
        assert tr.S_A_prev[0] == 0 and tr.S_B_prev[0] == 0

    def test_tally_merge(self):
        a, b = Tally(exchanges=3, errors=1), Tally(exchanges=4, errors=2)
        a += b
        assert (a.exchanges, a.errors) == (7, 3)


class TestStatistics:
    def test_state_occupancy_is_half(self):
        r = run_trials(ExperimentConfig(N=50, thresholds=TH, exchanges=1_000_000, master_seed=5))
        assert r.state_occupancy == pytest.approx(0.5, abs=0.01)

    def test_flip_not_better_than_classical(self):
        for N in (25, 50):
            f = run_trials(ExperimentConfig(N=N, thresholds=TH, exchanges=400_000, master_seed=6))
            c = run_trials(ExperimentConfig(scheme=Scheme.CLASSICAL, N=N, thresholds=TH, exchanges=400_000, master_seed=6))
            assert f.ber >= c.ber - 2 * math.hypot(f.ber_sigma, c.ber_sigma)

    def test_analytic_reference_only_for_voltage_ideal(self):
        assert analytic_reference(ExperimentConfig(thresholds=TH)) is not None
        assert analytic_reference(ExperimentConfig(thresholds=TH, detector=DetectorKind.JVCD)) is None
        assert analytic_reference(ExperimentConfig(thresholds=TH, snr_db_v=10.0)) is None

    def test_eve_assume_normal_is_a_coin_flip(self):
        r = run_trials(ExperimentConfig(N=100, thresholds=TH, eve=EveModel.ASSUME_NORMAL, exchanges=200_000, master_seed=8))
        n = r.eve_nonintermediate_bits
        assert abs(r.eve_accuracy_nonintermediate - 0.5) < 4 * math.sqrt(0.25 / n) + 0.01

    def test_eve_tracking_is_a_coin_flip(self):
        r = run_trials(ExperimentConfig(N=100, thresholds=TH, eve=EveModel.TRACKING, exchanges=200_000, master_seed=8))
        assert r.eve_accuracy_nonintermediate == pytest.approx(0.5, abs=0.02)

    def test_block_size_divides_shard(self):
        assert SHARD_SIZE % BLOCK_SIZE == 0
