"""See-saw adversary: the best strategy it finds at a target T gives a lower
bound on the guessing probability, the SDP gives the upper bound."""

from dimcert import (
    build_moment_basis,
    certify,
    critical_T,
    default_generation_set,
    make_qrac_scenario,
    seesaw_attack,
)

s = make_qrac_scenario(4)
xp = default_generation_set(s, 1)
basis = build_moment_basis(s, seed=1)

for t in (critical_T(1), 0.746, 0.75):
    att = seesaw_attack(s, xp, "binarized", t, seed=0, restarts=1)
    up = certify(s, basis, t, K=1)
    print(f"t={t:.7f}  attack p_guess={att.p_guess:.5f} (T={att.T:.7f})  SDP p_star={up.p_star:.5f}")
