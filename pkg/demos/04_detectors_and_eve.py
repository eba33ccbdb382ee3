"""
Key rate, joint detection and what Eve sees
===========================================
"""

from flipkljn import DetectorKind, EveModel, ExperimentConfig, Scheme, run_trials

# The classical scheme throws away every exchange with equal bits.
for scheme in Scheme:
    r = run_trials(ExperimentConfig(scheme=scheme, N=200, exchanges=200_000))
    print(f"{scheme.value:9s} kept {r.accepted_fraction:.3f} of exchanges, ber {r.ber:.2e}")

# Reading the current as well and dropping disagreements trades a few
# discarded bits for a much lower error rate.
for det in DetectorKind:
    r = run_trials(ExperimentConfig(detector=det, N=50, exchanges=200_000))
    print(f"{det.value:10s} ber {r.ber:.2e}  discarded {r.discarded_percentage:5.2f}%")

# With noisy instruments the joint detector discards more.
for snr in (6, 10, 16, 20):
    r = run_trials(ExperimentConfig(detector=DetectorKind.JVCD, N=100, snr_db_v=snr, snr_db_i=snr, exchanges=100_000))
    print(f"SNR {snr:2d} dB  discarded {r.discarded_percentage:5.2f}%")

# An eavesdropper who can tell LL from HH still cannot tell which state the
# parties are in.
flip = run_trials(ExperimentConfig(N=200, eve=EveModel.ASSUME_NORMAL, exchanges=200_000))
classical = run_trials(ExperimentConfig(scheme=Scheme.CLASSICAL, N=200, eve=EveModel.LEVEL_CLASSIFIER, exchanges=200_000))
print("Eve on flip, non-intermediate bits:", flip.eve_accuracy_nonintermediate)
print("Eve on classical LL/HH exchanges:   ", classical.eve_accuracy_nonintermediate)
