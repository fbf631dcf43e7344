"""Certified min-entropy from the observed QRAC value.

Building the d=4 basis takes a few seconds; every assignment is one SDP, so
K=4 in binarized mode costs 16 solves.
"""

import numpy as np

from dimcert import build_moment_basis, certify, critical_T, make_qrac_scenario

s = make_qrac_scenario(4)
basis = build_moment_basis(s, seed=1)
print("affine dimension m =", basis.m, "from", basis.meta["samples"], "samples")
print("largest T over the relaxation:", round(basis.max_T(s), 7))

# below the K=1 threshold one input can be predicted, above it not
for K in (1, 2, 3, 4):
    r = certify(s, basis, 0.7347, K=K)
    print(f"t=0.7347 K={K}: p_star={r.p_star:.6f} H={r.H_bits:.6f} bits, worst assignment {r.argmax}")

print("threshold for K=1:", critical_T(1))
for t in np.linspace(0.742, 0.75, 5):
    r = certify(s, basis, float(t), K=1)
    print(f"  t={t:.4f}  H={r.H_bits:.6f}")

# the file round-trips byte for byte
basis.save("d4.basis")
print("saved d4.basis")
