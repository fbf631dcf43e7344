"""The d=4 random access code: classical limit, ideal quantum strategy and
the eigenvector attacks that make K generation inputs predictable."""

import numpy as np

from dimcert import (
    behavior_of,
    classical_optimum,
    default_generation_set,
    eigenvector_attack_strategy,
    eval_T,
    ideal_qrac_strategy,
    make_qrac_scenario,
)

s = make_qrac_scenario(4)
print("preparations", s.n_prep, "settings", s.n_meas, "outcomes", s.n_out)

# best classical encoding (exact search)
value, cs = classical_optimum(s)
print("classical optimum T =", value)
print("  encoding z -> message:", cs.encoding)

# mutually unbiased bases reach 3/4
p = behavior_of(ideal_qrac_strategy(4))
print("ideal strategy T =", round(eval_T(s, p), 12))

# prepare eigenvectors of the measurement for K inputs: those become deterministic
for K in (1, 2, 3, 4, 8, 16):
    q = behavior_of(eigenvector_attack_strategy(s, default_generation_set(s, K)))
    print(f"K={K:2d}  attack T = {eval_T(s, q):.7f}")

# fraction of inputs that are answered with certainty
q = behavior_of(eigenvector_attack_strategy(s, default_generation_set(s, 3)))
print("deterministic columns:", int((np.isclose(q.max(axis=0), 1)).sum()), "of", s.n_x)
