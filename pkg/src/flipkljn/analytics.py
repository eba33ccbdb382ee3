"""Closed-form bit-error chain of the voltage-only Flip-KLJN detector.

All functions take normalized inputs: ``alpha = R_H/R_L``, thresholds ``beta``
and ``kappa`` in units of the lowest level, and ``N`` samples per estimate.
The Q-function terms use the Gaussian (CLT) law of the variance estimate;
:func:`exact_p_values` redoes the chain with the exact chi-square law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc, gammaincc, gammainc

from .exceptions import DomainError


def q_function(x):
    """Gaussian tail P(Z > x); accepts scalars or arrays."""
    out = 0.5 * erfc(np.asarray(x, dtype=float) / math.sqrt(2.0))
    return float(out) if np.ndim(out) == 0 else out


def intermediate_ratio(alpha: float) -> float:
    return 2.0 * alpha / (1.0 + alpha)


@dataclass(frozen=True)
class AnalyticInputs:
    alpha: float
    beta: float
    kappa: float
    N: int

    def __post_init__(self):
        if not self.alpha > 1:
            raise DomainError(f"alpha={self.alpha} must exceed 1")
        if self.N < 1:
            raise DomainError(f"N={self.N} must be positive")
        m = intermediate_ratio(self.alpha)
        if not 1 < self.beta < m < self.kappa < self.alpha:
            raise DomainError(
                f"need 1 < beta < {m:.6g} < kappa < {self.alpha:g}, got beta={self.beta}, kappa={self.kappa}"
            )

    @property
    def m(self) -> float:
        return intermediate_ratio(self.alpha)


def q_terms(alpha, beta, kappa, N):
    """The four distinct Q-terms (p1, p2, p5, p6); unvalidated, broadcasts over arrays."""
    m = 2.0 * alpha / (1.0 + alpha)
    s = np.sqrt(2.0 / N)
    return (
        q_function((beta - 1.0) / s),
        q_function((kappa - m) / (m * s)),
        q_function((m - beta) / (m * s)),
        q_function((alpha - kappa) / (alpha * s)),
    )


def p_values(inputs: AnalyticInputs) -> np.ndarray:
    """p1..p8 of the four mismatch transitions (index 0 holds p1)."""
    a, b, c, d = q_terms(inputs.alpha, inputs.beta, inputs.kappa, inputs.N)
    return np.array([a, b, b, a, c, d, d, c])


def mismatch_probability(inputs: AnalyticInputs) -> float:
    p = p_values(inputs)
    return 0.5 * (p[0] + p[1] + p[4] + p[5])


def match_bep(inputs: AnalyticInputs) -> float:
    p = p_values(inputs)
    return 0.25 * (p[0] + p[1] + p[4] + p[5])


def total_bep_from_match(p_bm):
    """Total error probability given the matched-state one: 3p - 2p^2."""
    return 3.0 * p_bm - 2.0 * p_bm * p_bm


def total_bep(inputs: AnalyticInputs) -> float:
    p_mm = mismatch_probability(inputs)
    p_bm = match_bep(inputs)
    # Mismatched exchanges are always wrong.
    return p_mm * 1.0 + (1.0 - p_mm) * p_bm


def pb_surface(alpha: float, beta, kappa, N: int):
    """Vectorized total BEP over threshold grids, no validation."""
    a, b, c, d = q_terms(alpha, beta, kappa, N)
    return total_bep_from_match(0.25 * (a + b + c + d))


@dataclass(frozen=True)
class BepBreakdown:
    p: np.ndarray
    P_mm: float
    P_bm: float
    P_b: float


def breakdown(inputs: AnalyticInputs) -> BepBreakdown:
    return BepBreakdown(
        p=p_values(inputs),
        P_mm=mismatch_probability(inputs),
        P_bm=match_bep(inputs),
        P_b=total_bep(inputs),
    )


def exact_tail_probability(gamma: float, sigma2: float, N: int) -> float:
    """P(sigma2_hat > gamma) when sigma2_hat is the mean of N squared N(0, sigma2) draws."""
    if gamma < 0 or not sigma2 > 0 or N < 1:
        raise DomainError(f"invalid tail arguments gamma={gamma}, sigma2={sigma2}, N={N}")
    # N*sigma2_hat/sigma2 ~ chi2_N, whose survival is Q(N/2, x/2).
    return float(gammaincc(N / 2.0, N * gamma / (2.0 * sigma2)))


def exact_lower_probability(gamma: float, sigma2: float, N: int) -> float:
    if gamma < 0 or not sigma2 > 0 or N < 1:
        raise DomainError(f"invalid tail arguments gamma={gamma}, sigma2={sigma2}, N={N}")
    return float(gammainc(N / 2.0, N * gamma / (2.0 * sigma2)))


def exact_p_values(inputs: AnalyticInputs) -> np.ndarray:
    """p1..p8 with chi-square tails in place of the Gaussian approximation."""
    a, m, N = inputs.alpha, inputs.m, inputs.N
    p1 = exact_tail_probability(inputs.beta, 1.0, N)
    p2 = exact_tail_probability(inputs.kappa, m, N)
    p5 = exact_lower_probability(inputs.beta, m, N)
    p6 = exact_lower_probability(inputs.kappa, a, N)
    return np.array([p1, p2, p2, p1, p5, p6, p6, p5])


def exact_breakdown(inputs: AnalyticInputs) -> BepBreakdown:
    p = exact_p_values(inputs)
    p_bm = 0.25 * (p[0] + p[1] + p[4] + p[5])
    p_mm = 2.0 * p_bm
    return BepBreakdown(p=p, P_mm=p_mm, P_bm=p_bm, P_b=p_mm + (1.0 - p_mm) * p_bm)


def classical_accepted_ber(inputs: AnalyticInputs) -> float:
    """Error rate among bits kept by classical KLJN with the voltage detector.

    A kept bit is wrong only when a non-intermediate level is read as
    intermediate by both parties, which share the same estimate.
    """
    p = p_values(inputs)
    wrong = 0.25 * (p[0] + p[5])
    right = 0.5 * (1.0 - p[1] - p[4])
    return wrong / (wrong + right)


def _level_cdf(x, level, N, law):
    if np.isinf(x):
        return 1.0
    if x <= 0:
        return 0.0
    if law == "exact":
        return exact_lower_probability(x, level, N)
    return 1.0 - q_function((x / level - 1.0) / math.sqrt(2.0 / N))


def flip_chain(inputs: AnalyticInputs, law: str = "exact") -> tuple[np.ndarray, np.ndarray]:
    """Transition matrix over joint states ``2*S_A + S_B`` and expected errors per exchange.

    Models the voltage-only Flip-KLJN protocol on ideal channels exactly:
    both parties read the same estimate, so their decisions are resolved
    jointly by cutting the estimate axis at their two thresholds.
    """
    if law not in ("exact", "clt"):
        raise ValueError(f"unknown law {law!r}")
    levels = (1.0, inputs.m, inputs.alpha)
    th = (inputs.beta, inputs.kappa)
    P = np.zeros((4, 4))
    E = np.zeros(4)
    for s in range(4):
        sa, sb = s >> 1, s & 1
        for bA in (0, 1):
            for bB in (0, 1):
                rA, rB = bA ^ sa, bB ^ sb
                lvl = levels[rA + rB]
                tA, tB = th[rA], th[rB]
                cuts = sorted({0.0, tA, tB, math.inf})
                for lo, hi in zip(cuts[:-1], cuts[1:]):
                    w = 0.25 * (_level_cdf(hi, lvl, inputs.N, law) - _level_cdf(lo, lvl, inputs.N, law))
                    # Any interior point of the cell fixes both decisions.
                    peer_A, peer_B = int(lo >= tA), int(lo >= tB)
                    dB, dA = peer_A ^ sa, peer_B ^ sb
                    nsa = sa ^ int(bA == 1 and dB == 0)
                    nsb = sb ^ int(dA == 1 and bB == 0)
                    P[s, 2 * nsa + nsb] += w
                    E[s] += w * ((dB != bB) + (dA != bA))
    return P, E


def stationary_flip_ber(inputs: AnalyticInputs, law: str = "exact") -> float:
    """Long-run BER of the voltage-only Flip-KLJN protocol from its state chain.

    Unlike :func:`total_bep`, keeps the correlation between the two parties'
    decisions and the exact occupancy of the mismatched states.
    """
    P, E = flip_chain(inputs, law)
    A = np.vstack([P.T - np.eye(4), np.ones(4)])
    rhs = np.zeros(5)
    rhs[-1] = 1.0
    pi = np.linalg.lstsq(A, rhs, rcond=None)[0]
    return float(pi @ E / 2.0)
