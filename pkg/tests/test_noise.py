import math

import numpy as np
import pytest
from scipy import stats

from flipkljn.exceptions import ConfigurationError
from flipkljn.noise import (
    Channel,
    MeasurementChannel,
    NoiseEnvironment,
    Resistor,
    WireSamples,
    add_measurement_noise,
    average_signal_power,
    build_environment,
    derive_rng,
    estimate_variance,
    generate_exchange_samples,
    noise_variance,
    sample_gram_statistics,
)

L, H = Resistor.L, Resistor.H


class TestEnvironment:
    def test_voltage_levels_from_physical_constants(self, env):
        # 4kT df R_L / 2 = 4 * 1.38e-23 * 300 * 1e6 * 1000 / 2
        assert env.v_LL == pytest.approx(8.28e-12, rel=1e-12)
        assert env.v_LH == pytest.approx(20 / 11 * 8.28e-12, rel=1e-12)
        assert env.v_LH == pytest.approx(1.5054e-11, rel=1e-4)
        assert env.v_HH == pytest.approx(8.28e-11, rel=1e-12)

    def test_current_levels(self, env):
        s = 4 * 1.38e-23 * 300 * 1e6
        assert env.i_LL == pytest.approx(s / 2000, rel=1e-12)
        assert env.i_LH == pytest.approx(s / 11000, rel=1e-12)
        assert env.i_HH == pytest.approx(s / 20000, rel=1e-12)

    @pytest.mark.parametrize("alpha", [1.5, 2.0, 7.3, 10.0, 50.0])
    @pytest.mark.parametrize("R_L", [1.0, 1000.0, 3.3e5])
    def test_ratio_identities(self, alpha, R_L):
        e = build_environment(1.38e-23, 77.0, 2.5e4, R_L, alpha)
        m = 2 * alpha / (1 + alpha)
        assert e.v_LH / e.v_LL == pytest.approx(m, rel=1e-12)
        assert e.v_HH / e.v_LL == pytest.approx(alpha, rel=1e-12)
        assert e.i_LH / e.i_HH == pytest.approx(m, rel=1e-12)
        assert e.i_LL / e.i_HH == pytest.approx(alpha, rel=1e-12)
        assert e.v_LL < e.v_LH < e.v_HH
        assert e.i_HH < e.i_LH < e.i_LL

    def test_pair_order_does_not_matter(self, env):
        assert env.voltage_variance((L, H)) == env.voltage_variance((H, L))
        assert env.current_variance((L, H)) == env.current_variance((H, L))

    def test_alpha_one_collapses_levels(self):
        # Rejected by the builder, but the formulas still apply.
        e = NoiseEnvironment(1.38e-23, 300.0, 1e6, 1000.0, 1.0)
        assert e.v_LL == pytest.approx(e.v_LH, rel=1e-12)
        assert e.v_LH == pytest.approx(e.v_HH, rel=1e-12)
        assert average_signal_power(e, Channel.VOLTAGE) == pytest.approx(e.v_LL, rel=1e-12)

    @pytest.mark.parametrize(
        "args",
        [
            (0.0, 300, 1e6, 1000, 10),
            (1.38e-23, -1, 1e6, 1000, 10),
            (1.38e-23, 300, 0, 1000, 10),
            (1.38e-23, 300, 1e6, 0, 10),
            (1.38e-23, 300, 1e6, 1000, 1.0),
            (1.38e-23, 300, 1e6, 1000, 0.5),
        ],
    )
    def test_invalid_inputs(self, args):
        with pytest.raises(ConfigurationError):
            build_environment(*args)


class TestSignalPower:
    def test_voltage_average(self, env):
        assert average_signal_power(env, Channel.VOLTAGE) == pytest.approx((8.28e-12 + 8.28e-12 * 20 / 11 + 8.28e-11) / 3, rel=1e-12)
        assert average_signal_power(env, Channel.VOLTAGE) == pytest.approx(3.538e-11, rel=1e-3)

    def test_current_average(self, env):
        assert average_signal_power(env, Channel.CURRENT) == pytest.approx((env.i_LL + env.i_LH + env.i_HH) / 3, rel=1e-12)

    def test_zero_db_noise_equals_signal_power(self, env):
        cfg = MeasurementChannel(Channel.VOLTAGE, 0.0)
        assert noise_variance(env, cfg) == pytest.approx(3.538e-11, rel=1e-3)

    def test_ideal_channel_has_no_noise(self, env):
        assert noise_variance(env, MeasurementChannel(Channel.CURRENT)) == 0.0

    def test_nonfinite_snr_rejected(self):
        with pytest.raises(ConfigurationError):
            MeasurementChannel(Channel.VOLTAGE, float("inf"))


class TestSamples:
    def test_replay_is_bit_identical(self, env):
        a = generate_exchange_samples(env, (L, H), 4, derive_rng(11, 3))
        b = generate_exchange_samples(env, (L, H), 4, derive_rng(11, 3))
        np.testing.assert_array_equal(a.voltage_samples, b.voltage_samples)
        np.testing.assert_array_equal(a.current_samples, b.current_samples)

    def test_different_keys_differ(self, env):
        a = generate_exchange_samples(env, (L, H), 4, derive_rng(11, 3))
        b = generate_exchange_samples(env, (L, H), 4, derive_rng(11, 4))
        assert not np.array_equal(a.voltage_samples, b.voltage_samples)

    def test_large_sample_variances(self, env):
        rng = derive_rng(5)
        ll = generate_exchange_samples(env, (L, L), 10**6, rng)
        hh = generate_exchange_samples(env, (H, H), 10**6, rng)
        assert estimate_variance(ll.voltage_samples) == pytest.approx(env.v_LL, rel=0.01)
        assert estimate_variance(hh.current_samples) == pytest.approx(env.i_HH, rel=0.01)

    def test_samples_are_read_only(self, env):
        w = generate_exchange_samples(env, (L, L), 8, derive_rng(0))
        with pytest.raises(ValueError):
            w.voltage_samples[0] = 1.0

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            WireSamples(np.zeros(3), np.zeros(4), (L, L))

    def test_zero_samples_rejected(self, env):
        with pytest.raises(ValueError):
            generate_exchange_samples(env, (L, L), 0, derive_rng(0))


class TestMeasurementNoise:
    def test_ideal_is_identity(self, env):
        w = generate_exchange_samples(env, (L, H), 16, derive_rng(1))
        assert add_measurement_noise(w, MeasurementChannel(Channel.VOLTAGE), env, derive_rng(2)) is w

    def test_observers_share_signal_but_not_noise(self, env):
        w = generate_exchange_samples(env, (L, H), 64, derive_rng(1))
        cfg = MeasurementChannel(Channel.VOLTAGE, 10.0)
        rng = derive_rng(2)
        a = add_measurement_noise(w, cfg, env, rng)
        b = add_measurement_noise(w, cfg, env, rng)
        assert not np.array_equal(a.voltage_samples, b.voltage_samples)
        # The untouched channel and the underlying signal are shared.
        np.testing.assert_array_equal(a.current_samples, w.current_samples)
        np.testing.assert_array_equal(b.current_samples, w.current_samples)

    def test_added_variance_matches_snr(self, env):
        w = generate_exchange_samples(env, (L, L), 10**6, derive_rng(3))
        cfg = MeasurementChannel(Channel.VOLTAGE, 6.0)
        noisy = add_measurement_noise(w, cfg, env, derive_rng(4))
        added = estimate_variance(noisy.voltage_samples - w.voltage_samples)
        assert added == pytest.approx(average_signal_power(env, Channel.VOLTAGE) / 10**0.6, rel=0.01)


class TestEstimator:
    def test_zero_sequence(self):
        assert estimate_variance(np.zeros(10)) == 0.0

    def test_constant_sequence(self):
        assert estimate_variance([3.0] * 7) == pytest.approx(9.0)

    def test_mean_of_squares_not_sample_variance(self):
        # A sample variance would give 0 here.
        assert estimate_variance([2.0, 2.0]) == 4.0

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            estimate_variance([])

    def test_unbiased(self):
        N, M, sigma2 = 25, 20_000, 2.5
        x = derive_rng(9).standard_normal((M, N)) * math.sqrt(sigma2)
        est = (x * x).mean(axis=1)
        assert abs(est.mean() - sigma2) < 3 * math.sqrt(2 * sigma2**2 / (N * M))

    def test_chi_square_law(self, env):
        N = 30
        rng = derive_rng(21)
        est = np.array([estimate_variance(generate_exchange_samples(env, (L, H), N, rng).voltage_samples) for _ in range(10_000)])
        res = stats.kstest(N * est / env.v_LH, stats.chi2(N).cdf)
        assert res.pvalue > 0.01


class TestGramStatistics:
    def test_no_observer_is_scaled_chi_square(self):
        g = sample_gram_statistics(40, 0, 20_000, derive_rng(1))
        assert g.cross is None
        assert stats.kstest(40 * g.signal, stats.chi2(40).cdf).pvalue > 0.01

    @pytest.mark.parametrize("n_obs", [1, 2, 3])
    def test_bartlett_matches_direct(self, n_obs):
        N, size = 12, 20_000
        b = sample_gram_statistics(N, n_obs, size, derive_rng(1), method="bartlett")
        d = sample_gram_statistics(N, n_obs, size, derive_rng(2), method="direct")
        assert stats.ks_2samp(b.signal, d.signal).pvalue > 0.01
        for o in range(n_obs):
            assert stats.ks_2samp(b.cross[:, o], d.cross[:, o]).pvalue > 0.01
            assert stats.ks_2samp(b.noise[:, o], d.noise[:, o]).pvalue > 0.01
            # A noisy observer's estimate, which mixes all three statistics.
            eb = b.estimate(2.0, 0.7, o)
            ed = d.estimate(2.0, 0.7, o)
            assert stats.ks_2samp(eb, ed).pvalue > 0.01

    def test_noisy_estimate_is_scaled_chi_square(self):
        # Signal plus independent noise is Gaussian with summed variance.
        N, s2, w2 = 20, 1.5, 0.5
        g = sample_gram_statistics(N, 2, 20_000, derive_rng(3))
        est = g.estimate(s2, w2, 1)
        assert stats.kstest(N * est / (s2 + w2), stats.chi2(N).cdf).pvalue > 0.01

    def test_observers_are_correlated_through_signal(self):
        g = sample_gram_statistics(10, 2, 50_000, derive_rng(4))
        a, b = g.estimate(1.0, 1.0, 0), g.estimate(1.0, 1.0, 1)
        assert np.corrcoef(a, b)[0, 1] > 0.2

    def test_bartlett_needs_enough_samples(self):
        with pytest.raises(ValueError):
            sample_gram_statistics(2, 3, 10, derive_rng(0), method="bartlett")

    def test_auto_falls_back_to_direct(self):
        g = sample_gram_statistics(2, 3, 100, derive_rng(0))
        assert g.noise.shape == (100, 3)
