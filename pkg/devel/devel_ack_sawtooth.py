"""
Print decoding-success probabilities p_j for a few (ell, n) codes.

The correction radius of the BSC+MDS model only grows every second IR bit,
so p_j drops on odd steps for some codes. Run this to see which codes in
the reference grid are affected.
"""

import numpy as np
from ouestimation.channel import CodingConfig, ack_probs, ack_prob_monotone_check
from ouestimation.utils import NonMonotoneAckError

EPSILON = 0.1
N_STEPS = 8

for ell, n in [(2, 4), (5, 7), (1, 3), (4, 10)]:
    cfg = CodingConfig(ell=ell, n=n, t_b=0.05, beta=0.15, epsilon=EPSILON)
    probs = ack_probs(cfg, N_STEPS)
    print(f"ell={ell} n={n}: " + ' '.join(f'{prob:.4f}' for prob in probs))
    try:
        ack_prob_monotone_check(cfg)
        print("    monotone")
    except NonMonotoneAckError as exc:
        print(f"    {exc}")

# How many codes of the full grid are affected
affected = 0
total = 0
for ell in range(1, 9):
    for n in range(ell, ell + 25):
        total += 1
        cfg = CodingConfig(ell=ell, n=n, t_b=0.05, beta=0.15, epsilon=EPSILON)
        probs = ack_probs(cfg, 50)
        if np.any(np.diff(probs) < 0):
            affected += 1
print(f"{affected} of {total} codes have a non-monotone p_j (epsilon={EPSILON})")
