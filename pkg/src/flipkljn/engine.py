"""Vectorized session engine.

A session is a sequence of exchanges whose party states carry over. Given the
per-exchange randomness (bits, estimator statistics, Eve's coins), every
exchange is a deterministic map on the four joint states (S_A, S_B). The
engine evaluates that map for all four states at once, composes the maps with
a doubling prefix scan to recover the state sequence, and gathers the
per-exchange outcomes of the states actually visited.

Integer codes: resistor L=0/H=1, state Normal=0/Flip=1, joint state
``2*S_A + S_B``, undecided bits and flagged decisions are ``-1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .eve import EveModel, classify_level, eve_bits_batch
from .noise import Channel, GramStatistics, MeasurementChannel, NoiseEnvironment, noise_variance, sample_gram_statistics
from .protocol import DetectorKind, Scheme, ThresholdSet

ALICE, BOB, EVE = 0, 1, 2
STREAM_BITS, STREAM_VOLTAGE, STREAM_CURRENT, STREAM_EVE = range(4)


@dataclass(frozen=True)
class SessionSetup:
    env: NoiseEnvironment
    detector: DetectorKind
    thresholds: ThresholdSet
    N: int
    scheme: Scheme = Scheme.FLIP
    channels: dict = field(default_factory=dict)  # Channel -> MeasurementChannel
    eve: EveModel = EveModel.NONE
    exact_estimates: bool = False

    def channel(self, ch: Channel) -> MeasurementChannel:
        return self.channels.get(ch, MeasurementChannel(ch))

    def needs(self, ch: Channel) -> bool:
        if ch is Channel.VOLTAGE:
            return self.detector.uses_voltage or self.eve is not EveModel.NONE
        return self.detector.uses_current

    def observers(self, ch: Channel) -> int:
        """Number of independent noisy views to draw for the channel."""
        if self.channel(ch).ideal:
            return 0
        return 3 if ch is Channel.VOLTAGE and self.eve is not EveModel.NONE else 2


@dataclass
class SessionInputs:
    b_A: np.ndarray
    b_B: np.ndarray
    voltage: GramStatistics | None = None
    current: GramStatistics | None = None
    eve_coins: np.ndarray | None = None
    eve_guess_coins: np.ndarray | None = None

    def __len__(self):
        return len(self.b_A)


def draw_inputs(setup: SessionSetup, size: int, rngs) -> SessionInputs:
    """Draw a session's randomness; ``rngs`` maps stream id -> Generator.

    Separate streams keep the bits and each channel's statistics identical
    across detectors and Eve models for the same seed.
    """
    bits = rngs[STREAM_BITS].integers(0, 2, size=(2, size), dtype=np.int8)
    inputs = SessionInputs(bits[0], bits[1])
    if not setup.exact_estimates:
        if setup.needs(Channel.VOLTAGE):
            inputs.voltage = sample_gram_statistics(setup.N, setup.observers(Channel.VOLTAGE), size, rngs[STREAM_VOLTAGE])
        if setup.needs(Channel.CURRENT):
            inputs.current = sample_gram_statistics(setup.N, setup.observers(Channel.CURRENT), size, rngs[STREAM_CURRENT])
    if setup.eve is not EveModel.NONE:
        coins = rngs[STREAM_EVE].integers(0, 2, size=(2, size), dtype=np.int8)
        inputs.eve_coins, inputs.eve_guess_coins = coins[0], coins[1]
    return inputs


@dataclass
class SessionTrace:
    b_A: np.ndarray
    b_B: np.ndarray
    S_A_prev: np.ndarray
    S_B_prev: np.ndarray
    S_A_next: np.ndarray
    S_B_next: np.ndarray
    r_A: np.ndarray
    r_B: np.ndarray
    peer_A: np.ndarray
    peer_B: np.ndarray
    d_A: np.ndarray
    d_B: np.ndarray
    accepted: np.ndarray
    eve_level: np.ndarray | None = None
    eve_bit: np.ndarray | None = None
    eve_guess: np.ndarray | None = None

    def __len__(self):
        return len(self.b_A)

    @property
    def flag_A(self):
        return self.peer_A < 0

    @property
    def flag_B(self):
        return self.peer_B < 0

    @property
    def error_A(self):
        return self.d_B != self.b_B

    @property
    def error_B(self):
        return self.d_A != self.b_A

    @property
    def intermediate(self):
        return self.r_A != self.r_B


def _voltage_peer(own, est, env, th):
    gamma = np.where(own == 0, th.beta * env.v_LL, th.kappa * env.v_LL)
    return (est >= gamma).astype(np.int8)


def _current_peer(own, est, env, th):
    gamma = np.where(own == 1, th.eta * env.i_HH, th.xi * env.i_HH)
    return (est < gamma).astype(np.int8)


def _estimate(setup, ch, stats, level, observer):
    if setup.exact_estimates:
        return level
    w2 = noise_variance(setup.env, setup.channel(ch))
    return stats.estimate(level, w2, observer) - w2


def _peer(setup, inputs, own, pair_sum, observer):
    env, th, det = setup.env, setup.thresholds, setup.detector
    v = i = None
    if det.uses_voltage:
        level = np.asarray(env.levels(Channel.VOLTAGE))[pair_sum]
        v = _voltage_peer(own, _estimate(setup, Channel.VOLTAGE, inputs.voltage, level, observer), env, th)
    if det.uses_current:
        level = np.asarray(env.levels(Channel.CURRENT))[pair_sum]
        i = _current_peer(own, _estimate(setup, Channel.CURRENT, inputs.current, level, observer), env, th)
    if det is DetectorKind.VOLTAGE_ONLY:
        return v
    if det is DetectorKind.CURRENT_ONLY:
        return i
    if det is DetectorKind.JVCD:
        return np.where(v == i, v, -1).astype(np.int8)
    return np.where(own == 0, i, v).astype(np.int8)


def prefix_states(next_state: np.ndarray, initial: int) -> np.ndarray:
    """Joint state before each exchange, from per-exchange maps ``next_state[t, s]``.

    Composes the maps with a Hillis-Steele doubling scan, O(T log T).
    """
    T = next_state.shape[0]
    P = next_state.astype(np.intp)
    d = 1
    while d < T:
        P[d:] = np.take_along_axis(P[d:], P[:-d], axis=1)
        d *= 2
    prev = np.empty(T, dtype=np.intp)
    prev[0] = initial
    prev[1:] = P[:-1, initial]
    return prev


def simulate_session(setup: SessionSetup, inputs: SessionInputs, initial: tuple[int, int] = (0, 0)) -> SessionTrace:
    T = len(inputs)
    b_A = inputs.b_A.astype(np.int8)
    b_B = inputs.b_B.astype(np.int8)
    if setup.scheme is Scheme.FLIP:
        sa = np.array([0, 0, 1, 1], dtype=np.int8)[:, None]
        sb = np.array([0, 1, 0, 1], dtype=np.int8)[:, None]
    else:
        sa = np.zeros((1, 1), dtype=np.int8)
        sb = np.zeros((1, 1), dtype=np.int8)
    r_A = b_A ^ sa
    r_B = b_B ^ sb
    pair_sum = (r_A + r_B).astype(np.intp)
    peer_A = _peer(setup, inputs, r_A, pair_sum, ALICE)
    peer_B = _peer(setup, inputs, r_B, pair_sum, BOB)
    flag_A, flag_B = peer_A < 0, peer_B < 0
    d_B = np.where(flag_A, -1, peer_A ^ sa).astype(np.int8)
    d_A = np.where(flag_B, -1, peer_B ^ sb).astype(np.int8)
    accepted = ~(flag_A | flag_B)
    if setup.scheme is Scheme.CLASSICAL:
        accepted &= (peer_A != r_A) & (peer_B != r_B)
        rows = np.zeros(T, dtype=np.intp)
        next_sa, next_sb = np.broadcast_to(sa, r_A.shape), np.broadcast_to(sb, r_B.shape)
    else:
        fire_A = accepted & (b_A == 1) & (d_B == 0)
        fire_B = accepted & (d_A == 1) & (b_B == 0)
        next_sa = sa ^ fire_A
        next_sb = sb ^ fire_B
        rows = prefix_states((2 * next_sa + next_sb).T, 2 * initial[0] + initial[1])
    cols = np.arange(T)

    def g(a):
        return np.broadcast_to(a, r_A.shape)[rows, cols]

    trace = SessionTrace(
        b_A=b_A,
        b_B=b_B,
        S_A_prev=(rows >> 1).astype(np.int8) if setup.scheme is Scheme.FLIP else np.zeros(T, np.int8),
        S_B_prev=(rows & 1).astype(np.int8) if setup.scheme is Scheme.FLIP else np.zeros(T, np.int8),
        S_A_next=g(next_sa).astype(np.int8),
        S_B_next=g(next_sb).astype(np.int8),
        r_A=g(r_A),
        r_B=g(r_B),
        peer_A=g(peer_A),
        peer_B=g(peer_B),
        d_A=g(d_A),
        d_B=g(d_B),
        accepted=g(accepted),
    )
    if setup.eve is not EveModel.NONE:
        level = np.asarray(setup.env.levels(Channel.VOLTAGE))[trace.r_A.astype(np.intp) + trace.r_B]
        est = _estimate(setup, Channel.VOLTAGE, inputs.voltage, level, EVE)
        trace.eve_level = classify_level(est, setup.env).astype(np.int8)
        trace.eve_bit, _ = eve_bits_batch(setup.eve, trace.eve_level, inputs.eve_coins)
        # Undetermined outputs are scored as Eve's best move: a fair guess.
        trace.eve_guess = np.where(trace.eve_bit < 0, inputs.eve_guess_coins, trace.eve_bit).astype(np.int8)
    return trace
