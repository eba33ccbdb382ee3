"""Two-party Flip-KLJN and classical KLJN state machines.

This module is the scalar reference: one exchange at a time, with enums and
plain branching. :mod:`flipkljn.engine` is the vectorized counterpart used by
the Monte Carlo harness and is tested against this one.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .exceptions import ConfigurationError
from .noise import (
    Channel,
    MeasurementChannel,
    NoiseEnvironment,
    Resistor,
    add_measurement_noise,
    estimate_variance,
    generate_exchange_samples,
    noise_variance,
)


class State(enum.IntEnum):
    NORMAL = 0
    FLIP = 1

    def opposite(self) -> "State":
        return State(1 - self)


class Role(enum.Enum):
    ALICE = "alice"
    BOB = "bob"


class DetectorKind(enum.Enum):
    VOLTAGE_ONLY = "voltage"
    CURRENT_ONLY = "current"
    JVCD = "jvcd"
    SELECTIVE = "selective"

    @property
    def uses_voltage(self) -> bool:
        return self is not DetectorKind.CURRENT_ONLY

    @property
    def uses_current(self) -> bool:
        return self is not DetectorKind.VOLTAGE_ONLY


class Scheme(enum.Enum):
    CLASSICAL = "classical"
    FLIP = "flip"


def map_bit_to_resistor(S: State, b: int) -> Resistor:
    if S == State.NORMAL:
        return Resistor.L if b == 0 else Resistor.H
    return Resistor.H if b == 0 else Resistor.L


def map_resistor_to_bit(S: State, resistor: Resistor) -> int:
    if S == State.NORMAL:
        return 0 if resistor == Resistor.L else 1
    return 1 if resistor == Resistor.L else 0


@dataclass(frozen=True)
class ThresholdSet:
    """Normalized thresholds: ``beta, kappa`` in units of v_LL, ``eta, xi`` in units of i_HH."""

    beta: float
    kappa: float
    eta: float | None = None
    xi: float | None = None

    def validate(self, alpha: float, need_current: bool = False) -> "ThresholdSet":
        m = 2.0 * alpha / (1.0 + alpha)
        if not 1.0 < self.beta < m < self.kappa < alpha:
            raise ConfigurationError(
                f"voltage thresholds must satisfy 1 < beta < {m:.6g} < kappa < {alpha:g}; "
                f"got beta={self.beta}, kappa={self.kappa}"
            )
        if need_current or self.eta is not None or self.xi is not None:
            if self.eta is None or self.xi is None:
                raise ConfigurationError("current-channel detectors need both eta and xi")
            if not 1.0 < self.eta < m < self.xi < alpha:
                raise ConfigurationError(
                    f"current thresholds must satisfy 1 < eta < {m:.6g} < xi < {alpha:g}; "
                    f"got eta={self.eta}, xi={self.xi}"
                )
        return self


@dataclass
class PartyState:
    role: Role
    S: State = State.NORMAL
    b: int = 0
    d: int | None = None
    flagged: bool = False

    @property
    def resistor(self) -> Resistor:
        return map_bit_to_resistor(self.S, self.b)


def decide_peer_resistor_voltage(own: Resistor, sigma2_v_hat: float, env: NoiseEnvironment, th: ThresholdSet) -> Resistor:
    # Ties go to the higher-variance hypothesis.
    gamma = th.beta * env.v_LL if own == Resistor.L else th.kappa * env.v_LL
    return Resistor.L if sigma2_v_hat < gamma else Resistor.H


def decide_peer_resistor_current(own: Resistor, sigma2_i_hat: float, env: NoiseEnvironment, th: ThresholdSet) -> Resistor:
    # Current falls as resistance rises; ties go to the higher-current (L) hypothesis.
    gamma = th.eta * env.i_HH if own == Resistor.H else th.xi * env.i_HH
    return Resistor.H if sigma2_i_hat < gamma else Resistor.L


def jvcd_decide(
    own: Resistor, sigma2_v_hat: float, sigma2_i_hat: float, env: NoiseEnvironment, th: ThresholdSet
) -> Resistor | None:
    """Joint decision, or ``None`` (error flag) when the two channels disagree."""
    v = decide_peer_resistor_voltage(own, sigma2_v_hat, env, th)
    i = decide_peer_resistor_current(own, sigma2_i_hat, env, th)
    return v if v == i else None


def selective_decide(
    own: Resistor, sigma2_v_hat: float, sigma2_i_hat: float, env: NoiseEnvironment, th: ThresholdSet
) -> Resistor:
    if own == Resistor.L:
        return decide_peer_resistor_current(own, sigma2_i_hat, env, th)
    return decide_peer_resistor_voltage(own, sigma2_v_hat, env, th)


def decide(
    detector: DetectorKind,
    own: Resistor,
    sigma2_v_hat: float | None,
    sigma2_i_hat: float | None,
    env: NoiseEnvironment,
    th: ThresholdSet,
) -> Resistor | None:
    if detector is DetectorKind.VOLTAGE_ONLY:
        return decide_peer_resistor_voltage(own, sigma2_v_hat, env, th)
    if detector is DetectorKind.CURRENT_ONLY:
        return decide_peer_resistor_current(own, sigma2_i_hat, env, th)
    if detector is DetectorKind.JVCD:
        return jvcd_decide(own, sigma2_v_hat, sigma2_i_hat, env, th)
    return selective_decide(own, sigma2_v_hat, sigma2_i_hat, env, th)


def update_state(role: Role, b_own: int, d_peer: int | None, accepted: bool, S: State) -> State:
    if not accepted:
        return S
    if role is Role.ALICE:
        fires = b_own == 1 and d_peer == 0
    else:
        fires = d_peer == 1 and b_own == 0
    return S.opposite() if fires else S


@dataclass
class ExchangeRecord:
    index: int
    b_A: int
    b_B: int
    S_A_prev: State
    S_B_prev: State
    S_A_next: State
    S_B_next: State
    resistor_A: Resistor
    resistor_B: Resistor
    sigma2_v_hat: dict[str, float] = field(default_factory=dict)
    sigma2_i_hat: dict[str, float] = field(default_factory=dict)
    peer_A: Resistor | None = None  # Alice's decision about Bob's resistor
    peer_B: Resistor | None = None
    d_A: int | None = None  # Bob's reading of Alice's bit
    d_B: int | None = None  # Alice's reading of Bob's bit
    flag_A: bool = False
    flag_B: bool = False
    accepted: bool = True
    scheme: Scheme = Scheme.FLIP

    @property
    def error_A(self) -> bool:
        return self.d_B != self.b_B

    @property
    def error_B(self) -> bool:
        return self.d_A != self.b_A

    @property
    def truth_pair(self) -> tuple[Resistor, Resistor]:
        return self.resistor_A, self.resistor_B

    @property
    def intermediate(self) -> bool:
        return self.resistor_A != self.resistor_B


def classical_kljn_accept(record: ExchangeRecord) -> bool:
    """Keep the bit only if both ends decided on an intermediate level."""
    if record.peer_A is None or record.peer_B is None:
        return False
    return record.peer_A != record.resistor_A and record.peer_B != record.resistor_B


def resolve_exchange(
    index: int,
    alice: PartyState,
    bob: PartyState,
    estimates: Mapping[str, tuple[float | None, float | None]],
    env: NoiseEnvironment,
    detector: DetectorKind,
    thresholds: ThresholdSet,
    scheme: Scheme = Scheme.FLIP,
) -> ExchangeRecord:
    """Decide, accept and update states from given variance estimates.

    ``estimates`` maps ``"alice"``/``"bob"`` to that party's (voltage, current)
    estimates, already compensated for any known measurement-noise floor.
    Party states are updated in place.
    """
    rA, rB = alice.resistor, bob.resistor
    vA, iA = estimates["alice"]
    vB, iB = estimates["bob"]
    peer_A = decide(detector, rA, vA, iA, env, thresholds)
    peer_B = decide(detector, rB, vB, iB, env, thresholds)
    alice.flagged, bob.flagged = peer_A is None, peer_B is None
    # Alice reads Bob's bit through her own state: both sides flip together.
    alice.d = None if peer_A is None else map_resistor_to_bit(alice.S, peer_A)
    bob.d = None if peer_B is None else map_resistor_to_bit(bob.S, peer_B)
    rec = ExchangeRecord(
        index=index,
        b_A=alice.b,
        b_B=bob.b,
        S_A_prev=alice.S,
        S_B_prev=bob.S,
        S_A_next=alice.S,
        S_B_next=bob.S,
        resistor_A=rA,
        resistor_B=rB,
        sigma2_v_hat={"alice": vA, "bob": vB},
        sigma2_i_hat={"alice": iA, "bob": iB},
        peer_A=peer_A,
        peer_B=peer_B,
        d_A=bob.d,
        d_B=alice.d,
        flag_A=alice.flagged,
        flag_B=bob.flagged,
        scheme=scheme,
    )
    # Flags are public, so either flag discards the bit at both ends.
    rec.accepted = not (rec.flag_A or rec.flag_B)
    if scheme is Scheme.CLASSICAL:
        rec.accepted = rec.accepted and classical_kljn_accept(rec)
        return rec
    alice.S = update_state(Role.ALICE, alice.b, alice.d, rec.accepted, alice.S)
    bob.S = update_state(Role.BOB, bob.b, bob.d, rec.accepted, bob.S)
    rec.S_A_next, rec.S_B_next = alice.S, bob.S
    return rec


def run_exchange(
    alice: PartyState,
    bob: PartyState,
    env: NoiseEnvironment,
    detector: DetectorKind,
    thresholds: ThresholdSet,
    N: int,
    rng: np.random.Generator,
    channel_configs: Mapping[Channel, MeasurementChannel] | None = None,
    scheme: Scheme = Scheme.FLIP,
    index: int = 0,
    observers: tuple[str, ...] = ("alice", "bob"),
) -> ExchangeRecord:
    """One full bit period: draw bits, drive the shared wire, estimate, decide.

    Every observer sees the same wire samples, each through an independent
    measurement-noise realization when a channel is not ideal. Estimates are
    floor-compensated by the known noise variance before thresholding. Extra
    ``observers`` (e.g. ``"eve"``) get their own noisy estimates in the record.
    """
    channel_configs = dict(channel_configs or {})
    alice.b = int(rng.integers(2))
    bob.b = int(rng.integers(2))
    wire = generate_exchange_samples(env, (alice.resistor, bob.resistor), N, rng)
    estimates: dict[str, tuple[float | None, float | None]] = {}
    for who in observers:
        est = []
        for ch, used in ((Channel.VOLTAGE, detector.uses_voltage or who == "eve"), (Channel.CURRENT, detector.uses_current)):
            if not used:
                est.append(None)
                continue
            cfg = channel_configs.get(ch, MeasurementChannel(ch))
            view = add_measurement_noise(wire, cfg, env, rng)
            est.append(estimate_variance(view.samples(ch)) - noise_variance(env, cfg))
        estimates[who] = (est[0], est[1])
    rec = resolve_exchange(index, alice, bob, estimates, env, detector, thresholds, scheme)
    for who in observers:
        if who not in ("alice", "bob"):
            rec.sigma2_v_hat[who], rec.sigma2_i_hat[who] = estimates[who]
    return rec


# Decision patterns that can move matched states into a mismatch when both
# parties threshold the same estimate, as
# (S_A, S_B) prev -> (S_A, S_B) next: {(b_A, b_B, d_B, d_A), ...}.
_VALID_MISMATCH_ENTRIES = {
    (0, 0, 0, 1): {(0, 0, 1, 1), (1, 0, 1, 1)},
    (0, 0, 1, 0): {(1, 0, 0, 0), (1, 1, 0, 0)},
    (1, 1, 0, 1): {(1, 0, 0, 0), (1, 1, 0, 0)},
    (1, 1, 1, 0): {(0, 0, 1, 1), (1, 0, 1, 1)},
}


def _transition_lookup() -> np.ndarray:
    valid = np.ones(256, dtype=bool)
    for code in range(256):
        sap, sbp, san, sbn, ba, bb, db, da = ((code >> (7 - i)) & 1 for i in range(8))
        if sap == sbp and san != sbn:
            valid[code] = (ba, bb, db, da) in _VALID_MISMATCH_ENTRIES[(sap, sbp, san, sbn)]
    return valid


_TRANSITION_VALID = _transition_lookup()


def invalid_mismatch_transition(S_A_prev, S_B_prev, S_A_next, S_B_next, b_A, b_B, d_A, d_B):
    """True where a matched -> mismatched transition used an impossible decision pattern.

    Works elementwise on arrays; exchanges with an undecided bit never count.
    """
    parts = [S_A_prev, S_B_prev, S_A_next, S_B_next, b_A, b_B, d_B, d_A]
    parts = [np.asarray(p, dtype=np.int64) for p in parts]
    decided = (parts[6] >= 0) & (parts[7] >= 0)
    code = np.zeros(np.broadcast(*parts).shape, dtype=np.int64)
    for p in parts:
        code = (code << 1) | (p & 1)
    return decided & ~_TRANSITION_VALID[code]
