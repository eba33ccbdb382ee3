"""
Tuning the thresholds and checking the error rate
=================================================
"""

from flipkljn import AnalyticInputs, ExperimentConfig, OptimizationProblem, optimize_voltage_thresholds, run_trials
from flipkljn.analytics import breakdown, exact_breakdown, stationary_flip_ber

res = optimize_voltage_thresholds(OptimizationProblem(alpha=10.0, N=100))
print("beta*", res.beta_star, "kappa*", res.kappa_star, "objective", res.objective_value)

inputs = AnalyticInputs(10.0, res.beta_star, res.kappa_star, 100)
print("closed form, gaussian law  ", breakdown(inputs).P_b)
print("closed form, chi-square law", exact_breakdown(inputs).P_b)
# The closed form treats successive errors as independent; the state chain
# does not, and is what the simulator should converge to.
print("state chain, chi-square law", stationary_flip_ber(inputs))

report = run_trials(ExperimentConfig(N=100, exchanges=1_000_000, master_seed=42))
print(f"simulated {report.ber:.5f} +- {report.ber_sigma:.5f}  CI {report.ber_ci}")
print("mean mismatch episode", report.mean_episode_length, "over", report.mismatch_episode_count)

# BER against N for the voltage-only detector.
for N in (25, 50, 100, 200):
    r = run_trials(ExperimentConfig(N=N, exchanges=200_000, master_seed=1))
    print(f"N={N:4d}  ber={r.ber:.3e}  analytic={r.analytic_pb:.3e}")
