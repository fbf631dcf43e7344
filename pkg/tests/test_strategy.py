import itertools

import numpy as np
import pytest

from dimcert.scenario import (
    GenerationSet,
    ScenarioError,
    default_generation_set,
    eval_T,
    make_qrac_scenario,
    success_probabilities,
    uniform_behavior,
    validate_behavior,
)
from dimcert.strategy import (
    ClassicalStrategy,
    Strategy,
    StrategyError,
    behavior_of,
    classical_optimum,
    eigenvector_attack_strategy,
    guessing_probability,
    haar_unitary,
    ideal_qrac_strategy,
    random_general_strategy,
    random_strategy,
    seesaw_attack,
    seesaw_max_T,
)


def brute_force_classical(d):
    """Independent oracle: every pair of decodings, best message per input."""
    maps = np.array(list(itertools.product(range(d), repeat=d)))
    hit = (maps[:, :, None] == np.arange(d)).astype(np.int16)  # [decoder, message, answer]
    best = 0
    for h0 in hit:
        score = h0[None, :, :, None] + hit[:, :, None, :]  # [d1, msg, a0, a1]
        best = max(best, int(score.max(axis=1).sum(axis=(1, 2)).max()))
    return best / (2 * d * d)


def test_behavior_computational_basis():
    s = make_qrac_scenario(2)
    e0 = np.diag([1.0, 0.0])
    st = Strategy(np.array([e0] * 4), np.array([[e0, np.eye(2) - e0]] * 2))
    p = behavior_of(st)
    assert np.all(p[0, ::2] == 1)


def test_behavior_maximally_mixed():
    s = make_qrac_scenario(4)
    rng = np.random.default_rng(5)
    st = random_strategy(s, rng)
    st = st.with_states(np.array([np.eye(4) / 4] * 16))
    p = behavior_of(st)
    traces = np.array([[np.trace(e).real for e in povm] for povm in st.measurements])
    for x in range(32):
        assert np.allclose(p[:, x], traces[x % 2] / 4)


def test_invalid_strategy_names_object():
    s = make_qrac_scenario(2)
    st = ideal_qrac_strategy(2)
    bad = st.states.copy()
    bad[3] = bad[3] * 2
    with pytest.raises(StrategyError, match="state 3"):
        behavior_of(st.with_states(bad))
    meas = st.measurements.copy()
    meas[1, 0] = meas[1, 0] * 0.5
    with pytest.raises(StrategyError, match="measurement 1"):
        behavior_of(st.with_measurements(meas))


def test_random_behaviors_are_normalized():
    s = make_qrac_scenario(4)
    rng = np.random.default_rng(0)
    for k in range(100):
        st = random_strategy(s, rng) if k % 2 else random_general_strategy(s, rng)
        st.validate()
        validate_behavior(behavior_of(st))


def test_haar_unitary_is_unitary_and_seeded():
    u = haar_unitary(5, np.random.default_rng(3))
    assert np.allclose(u.conj().T @ u, np.eye(5), atol=1e-12)
    assert np.array_equal(u, haar_unitary(5, np.random.default_rng(3)))


def test_ideal_d4():
    s = make_qrac_scenario(4)
    p = behavior_of(ideal_qrac_strategy(4))
    assert eval_T(s, p) == pytest.approx(0.75, abs=1e-9)
    assert np.allclose(success_probabilities(s, p), 0.75, atol=1e-12)


def test_ideal_d2():
    s = make_qrac_scenario(2)
    assert eval_T(s, behavior_of(ideal_qrac_strategy(2))) == pytest.approx(np.cos(np.pi / 8) ** 2, abs=1e-12)


def test_ideal_invalid_dimension():
    with pytest.raises(ScenarioError):
        ideal_qrac_strategy(1)


@pytest.mark.parametrize("K", range(1, 17))
def test_eigenvector_attack_T(K):
    s = make_qrac_scenario(4)
    xp = default_generation_set(s, K)
    p = behavior_of(eigenvector_attack_strategy(s, xp))
    assert eval_T(s, p) == pytest.approx((16 - K) / 16 * 3 / 4 + K / 16 * 5 / 8, abs=1e-12)
    for z, y in xp:
        assert p[s.correct(z, y), s.x_index(z, y)] == pytest.approx(1.0, abs=1e-12)


def test_eigenvector_attack_single_state_terms():
    s = make_qrac_scenario(4)
    p = behavior_of(eigenvector_attack_strategy(s, default_generation_set(s, 1)))
    succ = success_probabilities(s, p)
    assert succ[0] == pytest.approx(1.0) and succ[1] == pytest.approx(0.25)


def test_eigenvector_attack_needs_distinct_z():
    s = make_qrac_scenario(4)
    with pytest.raises(StrategyError):
        eigenvector_attack_strategy(s, GenerationSet([(0, 0), (0, 1)]))


@pytest.mark.parametrize("d", [2, 3, 4])
def test_classical_optimum_matches_brute_force(d):
    s = make_qrac_scenario(d)
    value, cs = classical_optimum(s)
    assert value == pytest.approx(brute_force_classical(d), abs=1e-15)
    assert eval_T(s, cs.behavior(s)) == value


def test_classical_values():
    assert classical_optimum(make_qrac_scenario(4))[0] == 0.625
    assert classical_optimum(make_qrac_scenario(2))[0] == 0.75


def test_classical_too_large():
    with pytest.raises(ScenarioError, match="heuristic"):
        classical_optimum(make_qrac_scenario(7))


@pytest.mark.parametrize("y", [0, 1])
def test_classical_value_invariant_under_relabeling(y):
    s = make_qrac_scenario(4)
    value, cs = classical_optimum(s)
    perm = np.random.default_rng(y).permutation(4)
    enc = [0] * 16
    for z in range(16):
        a = list(s.pair(z))
        a[y] = perm[a[y]]
        enc[a[0] + 4 * a[1]] = cs.encoding[z]
    dec = list(cs.decodings)
    dec[y] = tuple(int(perm[b]) for b in dec[y])
    relabeled = ClassicalStrategy(tuple(enc), tuple(dec))
    assert eval_T(s, relabeled.behavior(s)) == value


def test_guessing_probability_examples():
    s = make_qrac_scenario(4)
    xp = default_generation_set(s, 3)
    u = uniform_behavior(s)
    assert guessing_probability(s, u, xp, "full") == pytest.approx(0.25)
    assert guessing_probability(s, u, xp, "binarized") == pytest.approx(0.75)
    det = np.zeros((4, 32))
    det[2] = 1
    assert guessing_probability(s, det, xp, "full") == 1
    p = behavior_of(eigenvector_attack_strategy(s, default_generation_set(s, 1)))
    for mode in ("full", "binarized"):
        assert guessing_probability(s, p, default_generation_set(s, 1), mode) == pytest.approx(1.0)


def test_seesaw_d2_reaches_quantum_value():
    s = make_qrac_scenario(2)
    r = seesaw_max_T(s, seed=4, restarts=5)
    assert r.T >= 0.8535
    assert np.all(np.diff(r.history) >= -1e-10)


def test_seesaw_is_reproducible():
    s = make_qrac_scenario(2)
    a = seesaw_max_T(s, seed=9, restarts=2)
    b = seesaw_max_T(s, seed=9, restarts=2)
    assert a.T == b.T
    assert np.array_equal(a.strategy.states, b.strategy.states)


def test_attack_at_first_threshold_is_deterministic():
    s = make_qrac_scenario(4)
    r = seesaw_attack(s, default_generation_set(s, 1), "binarized", 0.7421875, seed=0, restarts=1)
    assert r.success and r.T >= 0.7421875 - 1e-6
    assert r.p_guess >= 1 - 1e-9


def test_attack_low_target():
    s = make_qrac_scenario(4)
    r = seesaw_attack(s, default_generation_set(s, 1), "full", 0.25, seed=0, restarts=1)
    assert r.success and r.p_guess >= 1 - 1e-9


def test_attack_at_quantum_maximum_stays_below_bound():
    s = make_qrac_scenario(4)
    r = seesaw_attack(s, default_generation_set(s, 1), "binarized", 0.75, seed=0, restarts=1)
    assert r.success
    r.strategy.validate(1e-8)
    assert r.p_guess <= 0.7579 + 1e-3
