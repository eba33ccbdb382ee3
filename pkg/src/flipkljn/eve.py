"""Passive eavesdropper models.

Eve measures the same wire voltage as Alice and Bob, classifies the noise
level with two thresholds at the midpoints between adjacent levels, and
turns the level into a bit guess according to her model:

* ``LEVEL_CLASSIFIER``: classical KLJN reading, low -> 0/0, high -> 1/1.
* ``ASSUME_NORMAL`` / ``ASSUME_FLIP``: decode with one fixed mapping state.
* ``TRACKING``: keep a state hypothesis and toggle it by a coin flip whenever
  the level is intermediate, since 1/0 (which flips) and 0/1 (which does not)
  look the same on the wire.

Intermediate levels yield no bit (``None``).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .noise import Channel, NoiseEnvironment


class EveModel(enum.Enum):
    NONE = "none"
    LEVEL_CLASSIFIER = "level"
    ASSUME_NORMAL = "assume-normal"
    ASSUME_FLIP = "assume-flip"
    TRACKING = "tracking"


class Level(enum.IntEnum):
    LOW = 0
    INTERMEDIATE = 1
    HIGH = 2


def eve_thresholds(env: NoiseEnvironment) -> tuple[float, float]:
    """Midpoints between adjacent voltage levels (Eve knows alpha and N)."""
    v_LL, v_LH, v_HH = env.levels(Channel.VOLTAGE)
    return 0.5 * (v_LL + v_LH), 0.5 * (v_LH + v_HH)


def classify_level(sigma2_v_hat, env: NoiseEnvironment):
    t1, t2 = eve_thresholds(env)
    return np.where(sigma2_v_hat < t1, 0, np.where(sigma2_v_hat < t2, 1, 2))


@dataclass
class EveHistory:
    state_hypothesis: int = 0


@dataclass(frozen=True)
class EveRecord:
    level: Level
    bit: int | None
    state_hypothesis: int


def eve_decide(
    model: EveModel,
    sigma2_v_hat: float,
    env: NoiseEnvironment,
    history: EveHistory,
    rng: np.random.Generator | None = None,
    coin: int | None = None,
) -> EveRecord:
    """Eve's reading of one exchange; ``history`` is updated in place (tracking model).

    The tracking model's coin comes from ``coin`` when given, else from ``rng``.
    """
    level = Level(int(classify_level(sigma2_v_hat, env)))
    if model is EveModel.ASSUME_FLIP:
        state = 1
    elif model is EveModel.TRACKING:
        state = history.state_hypothesis
    else:
        state = 0
    bit = None if level is Level.INTERMEDIATE else (0 if level is Level.LOW else 1) ^ state
    if model is EveModel.TRACKING and level is Level.INTERMEDIATE:
        if coin is None:
            if rng is None:
                raise ValueError("the tracking model needs a coin or an rng")
            coin = int(rng.integers(2))
        history.state_hypothesis ^= int(coin)
    return EveRecord(level, bit, state)


def eve_bits_batch(model: EveModel, level: np.ndarray, coins: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized counterpart of :func:`eve_decide` over a session.

    ``coins`` are the tracking model's coin flips, one per exchange (only the
    ones at intermediate levels are used). Returns ``(bits, hypotheses)`` with
    ``-1`` for undetermined bits.
    """
    level = np.asarray(level)
    if model is EveModel.TRACKING:
        toggles = ((level == 1) & (coins == 1)).astype(np.int64)
        hyp = (np.cumsum(toggles) - toggles) & 1
    elif model is EveModel.ASSUME_FLIP:
        hyp = np.ones(level.shape, dtype=np.int64)
    else:
        hyp = np.zeros(level.shape, dtype=np.int64)
    raw = np.where(level == 2, 1, 0) ^ hyp
    bits = np.where(level == 1, -1, raw)
    return bits.astype(np.int8), hyp.astype(np.int8)
