"""
Noise levels on the wire and how well N samples estimate them
=============================================================
"""

import numpy as np
from scipy import stats

from flipkljn import Channel, build_environment
from flipkljn.analytics import exact_tail_probability, q_function
from flipkljn.noise import derive_rng, estimate_variance, generate_exchange_samples

env = build_environment(alpha=10.0)

# Three voltage levels (LL, LH/HL, HH) and three current levels; normalized
# by the smallest one both channels read 1, 2a/(1+a), a.
for ch in Channel:
    levels = np.array(env.levels(ch))
    print(ch.value, levels, "normalized:", np.sort(levels) / env.unit(ch))

# One exchange with Alice on L and Bob on H.
from flipkljn import Resistor

rng = derive_rng(0)
wire = generate_exchange_samples(env, (Resistor.L, Resistor.H), 100, rng)
print("LH estimate / true:", estimate_variance(wire.voltage_samples) / env.v_LH)

# The estimate is a scaled chi-square with N degrees of freedom.
N = 100
est = np.array([estimate_variance(rng.standard_normal(N)) for _ in range(20000)])
print("mean", est.mean(), "var", est.var(), "expected var", 2 / N)
print("KS vs chi2/N:", stats.kstest(est * N, stats.chi2(N).cdf).pvalue)

# Far in the tail the Gaussian approximation undershoots badly.
for gamma in (1.1, 1.2, 1.4):
    clt = q_function((gamma - 1) / np.sqrt(2 / 200))
    exact = exact_tail_probability(gamma, 1.0, 200)
    print(f"N=200 P(est > {gamma}): gaussian {clt:.3e}  chi-square {exact:.3e}  ratio {exact / clt:.3f}")
