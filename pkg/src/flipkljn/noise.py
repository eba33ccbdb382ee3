"""Johnson-noise levels of the KLJN loop and variance estimation.

The loop is modeled in SI units throughout. Voltage variances follow the
parallel combination of the two connected resistors, current variances the
series combination, so that normalized by their smallest level both channels
share the level structure ``1 < 2a/(1+a) < a``.

Sampling uses numpy's ``PCG64`` bit generator with ``Generator.standard_normal``
(ziggurat) for Gaussian draws and ``Generator.standard_gamma`` for the
chi-square draws of the batch path.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .exceptions import ConfigurationError

BOLTZMANN = 1.38e-23
ROOM_TEMPERATURE = 300.0
BANDWIDTH = 1e6
R_LOW = 1000.0


class Resistor(enum.IntEnum):
    L = 0
    H = 1


class Channel(enum.Enum):
    VOLTAGE = "voltage"
    CURRENT = "current"


Pair = tuple[Resistor, Resistor]


@dataclass(frozen=True)
class NoiseEnvironment:
    k: float
    T: float
    delta_f: float
    R_L: float
    alpha: float

    @property
    def R_H(self) -> float:
        return self.alpha * self.R_L

    def resistance(self, r: Resistor) -> float:
        return self.R_L if r == Resistor.L else self.R_H

    @property
    def _scale(self) -> float:
        return 4.0 * self.k * self.T * self.delta_f

    def _ordered(self, pair: Pair) -> tuple[float, float]:
        # Fixed operand order keeps L/H and H/L bit-identical.
        return tuple(sorted((self.resistance(pair[0]), self.resistance(pair[1]))))

    def voltage_variance(self, pair: Pair) -> float:
        ra, rb = self._ordered(pair)
        return self._scale * ra * rb / (ra + rb)

    def current_variance(self, pair: Pair) -> float:
        ra, rb = self._ordered(pair)
        return self._scale / (ra + rb)

    def variance(self, channel: Channel, pair: Pair) -> float:
        if channel is Channel.VOLTAGE:
            return self.voltage_variance(pair)
        return self.current_variance(pair)

    @property
    def v_LL(self) -> float:
        return self.voltage_variance((Resistor.L, Resistor.L))

    @property
    def v_LH(self) -> float:
        return self.voltage_variance((Resistor.L, Resistor.H))

    @property
    def v_HH(self) -> float:
        return self.voltage_variance((Resistor.H, Resistor.H))

    @property
    def i_LL(self) -> float:
        return self.current_variance((Resistor.L, Resistor.L))

    @property
    def i_LH(self) -> float:
        return self.current_variance((Resistor.L, Resistor.H))

    @property
    def i_HH(self) -> float:
        return self.current_variance((Resistor.H, Resistor.H))

    def levels(self, channel: Channel) -> tuple[float, float, float]:
        """(LL, LH, HH) variance levels of one channel."""
        if channel is Channel.VOLTAGE:
            return self.v_LL, self.v_LH, self.v_HH
        return self.i_LL, self.i_LH, self.i_HH

    def unit(self, channel: Channel) -> float:
        """Smallest level of the channel; thresholds are multiples of it."""
        return self.v_LL if channel is Channel.VOLTAGE else self.i_HH


def build_environment(
    k: float = BOLTZMANN,
    T: float = ROOM_TEMPERATURE,
    delta_f: float = BANDWIDTH,
    R_L: float = R_LOW,
    alpha: float = 10.0,
) -> NoiseEnvironment:
    for name, value in (("k", k), ("T", T), ("delta_f", delta_f), ("R_L", R_L)):
        if not (math.isfinite(value) and value > 0):
            raise ConfigurationError(f"{name}={value!r} must be a positive finite number")
    if not (math.isfinite(alpha) and alpha > 1):
        raise ConfigurationError(f"alpha={alpha!r} must satisfy alpha > 1 (R_H > R_L)")
    return NoiseEnvironment(k=float(k), T=float(T), delta_f=float(delta_f), R_L=float(R_L), alpha=float(alpha))


@dataclass(frozen=True)
class MeasurementChannel:
    """Measurement-noise setting of one channel; ``snr_db=None`` means ideal."""

    channel: Channel
    snr_db: float | None = None

    def __post_init__(self):
        if self.snr_db is not None and not math.isfinite(self.snr_db):
            raise ConfigurationError(f"snr_db={self.snr_db!r} must be finite (use None for ideal)")

    @property
    def ideal(self) -> bool:
        return self.snr_db is None


@dataclass(frozen=True)
class WireSamples:
    voltage_samples: np.ndarray
    current_samples: np.ndarray
    truth_pair: Pair

    def __post_init__(self):
        if len(self.voltage_samples) != len(self.current_samples) or len(self.voltage_samples) < 1:
            raise ValueError("voltage and current sequences must have the same non-zero length")
        self.voltage_samples.setflags(write=False)
        self.current_samples.setflags(write=False)

    @property
    def N(self) -> int:
        return len(self.voltage_samples)

    def samples(self, channel: Channel) -> np.ndarray:
        return self.voltage_samples if channel is Channel.VOLTAGE else self.current_samples


def derive_rng(master_seed: int, *key: int) -> np.random.Generator:
    """Independent stream for ``key`` (e.g. trial, exchange, observer) under one master seed."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(master_seed, spawn_key=tuple(key))))


def generate_exchange_samples(env: NoiseEnvironment, pair: Pair, N: int, rng: np.random.Generator) -> WireSamples:
    if N < 1:
        raise ValueError(f"N={N} must be >= 1")
    pair = (Resistor(pair[0]), Resistor(pair[1]))
    v = rng.standard_normal(N) * math.sqrt(env.voltage_variance(pair))
    i = rng.standard_normal(N) * math.sqrt(env.current_variance(pair))
    return WireSamples(v, i, pair)


def average_signal_power(env: NoiseEnvironment, channel: Channel) -> float:
    return sum(env.levels(channel)) / 3.0


def noise_variance(env: NoiseEnvironment, config: MeasurementChannel) -> float:
    """Per-sample measurement-noise variance implied by the channel's SNR."""
    if config.ideal:
        return 0.0
    return average_signal_power(env, config.channel) / 10.0 ** (config.snr_db / 10.0)


def add_measurement_noise(
    samples: WireSamples, config: MeasurementChannel, env: NoiseEnvironment, rng: np.random.Generator
) -> WireSamples:
    """One observer's noisy view of the shared wire.

    Each call draws a fresh noise realization, so calling once per observer
    gives independent views of the same underlying signal.
    """
    if config.ideal:
        return samples
    noisy = samples.samples(config.channel) + rng.standard_normal(samples.N) * math.sqrt(noise_variance(env, config))
    if config.channel is Channel.VOLTAGE:
        return WireSamples(noisy, samples.current_samples.copy(), samples.truth_pair)
    return WireSamples(samples.voltage_samples.copy(), noisy, samples.truth_pair)


def estimate_variance(sample_sequence: Sequence[float] | np.ndarray) -> float:
    """Mean of squares of a known zero-mean sequence."""
    x = np.asarray(sample_sequence, dtype=float)
    if x.size == 0:
        raise ValueError("cannot estimate variance of an empty sequence")
    return float(np.mean(x * x))


@dataclass(frozen=True)
class GramStatistics:
    """Normalized inner products of one exchange's unit-variance sequences.

    With unit signal ``z`` and per-observer unit noises ``n_o`` of length N:
    ``signal = z.z/N``, ``cross[:, o] = z.n_o/N``, ``noise[:, o] = n_o.n_o/N``.
    An observer's estimate of a level ``s2`` under noise variance ``w2`` is then
    ``s2*signal + 2*sqrt(s2*w2)*cross + w2*noise``, exactly as if the samples
    had been drawn and squared.
    """

    signal: np.ndarray
    cross: np.ndarray | None = None
    noise: np.ndarray | None = None

    def estimate(self, level, noise_var: float, observer: int):
        if noise_var == 0.0 or self.cross is None:
            return level * self.signal
        return (
            level * self.signal
            + 2.0 * np.sqrt(level * noise_var) * self.cross[:, observer]
            + noise_var * self.noise[:, observer]
        )


def sample_gram_statistics(
    N: int, n_observers: int, size: int, rng: np.random.Generator, method: str = "auto"
) -> GramStatistics:
    """Draw ``size`` exchanges' worth of :class:`GramStatistics`.

    ``method="bartlett"`` samples the Wishart(N, I) Gram matrix through its
    Bartlett factor, ``"direct"`` draws the raw N-sample sequences. Both give
    the same joint law; Bartlett needs ``N > n_observers``.
    """
    if N < 1:
        raise ValueError(f"N={N} must be >= 1")
    k = 1 + n_observers
    if method == "auto":
        method = "bartlett" if N >= k else "direct"
    if n_observers == 0:
        return GramStatistics(rng.standard_gamma(N / 2.0, size) * (2.0 / N))
    if method == "direct":
        chunk = max(1, 1_000_000 // (N * k))
        sig, cross, noise = [], [], []
        for start in range(0, size, chunk):
            z = rng.standard_normal((min(chunk, size - start), N, k))
            sig.append(np.einsum("tn,tn->t", z[:, :, 0], z[:, :, 0]))
            cross.append(np.einsum("tn,tno->to", z[:, :, 0], z[:, :, 1:]))
            noise.append(np.einsum("tno,tno->to", z[:, :, 1:], z[:, :, 1:]))
        return GramStatistics(
            np.concatenate(sig) / N, np.concatenate(cross) / N, np.concatenate(noise) / N
        )
    if method != "bartlett":
        raise ValueError(f"unknown method {method!r}")
    if N < k:
        raise ValueError(f"Bartlett sampling needs N >= {k}, got N={N}")
    # Bartlett factor A: A[i,i] = sqrt(chi2(N - i)), A[i,j] ~ N(0,1) for j < i.
    a00 = np.sqrt(rng.standard_gamma(N / 2.0, size) * 2.0)
    below = rng.standard_normal((size, n_observers, n_observers))
    diag = np.sqrt(rng.standard_gamma((N - np.arange(1, k)) / 2.0, (size, n_observers)) * 2.0)
    first_col = below[:, :, 0]
    rows = np.tril(below[:, :, 1:], k=-1) if n_observers > 1 else np.zeros((size, n_observers, 0))
    noise = diag**2 + first_col**2 + np.einsum("toj,toj->to", rows, rows)
    return GramStatistics(a00**2 / N, a00[:, None] * first_col / N, noise / N)
