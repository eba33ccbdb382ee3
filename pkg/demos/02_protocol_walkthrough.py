"""
A few bit exchanges, one at a time
==================================

Both parties start in the normal state. Whenever Alice sends 1 and Bob
sends 0 both switch state, which swaps the meaning of L and H for the next
exchange. Noise can make one party switch alone; the next exchange with
equal bits then brings them back in step.
"""

from flipkljn import DetectorKind, Role, ThresholdSet, build_environment
from flipkljn.noise import derive_rng
from flipkljn.protocol import PartyState, run_exchange

env = build_environment(alpha=10.0)
th = ThresholdSet(1.35, 3.3)
alice, bob = PartyState(Role.ALICE), PartyState(Role.BOB)
rng = derive_rng(3)

print(" t  S_A S_B  b_A b_B  wire  d_A d_B  next")
for t in range(40):
    rec = run_exchange(alice, bob, env, DetectorKind.VOLTAGE_ONLY, th, N=10, rng=rng, index=t)
    wire = "".join(r.name for r in rec.truth_pair)
    mark = "  <- mismatch" if rec.S_A_next != rec.S_B_next else ""
    print(
        f"{t:2d}   {rec.S_A_prev:d}   {rec.S_B_prev:d}    {rec.b_A}   {rec.b_B}   {wire}    "
        f"{rec.d_A}   {rec.d_B}   {rec.S_A_next:d}{rec.S_B_next:d}{mark}"
    )

# N=10 is deliberately short, so decision errors and mismatches show up.
