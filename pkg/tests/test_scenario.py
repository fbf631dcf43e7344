import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as hs

from dimcert.scenario import (
    GenerationSet,
    ScenarioError,
    binarize,
    binary_scenario,
    default_generation_set,
    eval_T,
    make_qrac_scenario,
    uniform_behavior,
    validate_behavior,
)


def random_behavior(s, seed):
    r = np.random.default_rng(seed).random((s.n_out, s.n_x))
    return r / r.sum(axis=0)


def test_qrac_d4_shape_and_coefficients(s4):
    assert (s4.n_prep, s4.n_meas, s4.n_out, s4.dim) == (16, 2, 4, 4)
    nz = s4.payoff[s4.payoff != 0]
    assert nz.size == 32
    assert np.allclose(nz, 1 / 32)
    # exactly one rewarded answer per input
    assert ((s4.payoff > 0).sum(axis=0) == 1).all()


def test_qrac_d2_coefficients(s2):
    assert (s2.n_prep, s2.n_out) == (4, 2)
    assert np.allclose(s2.payoff[s2.payoff != 0], 1 / 8)


@pytest.mark.parametrize("d", [1, 0, -3, 2.5])
def test_invalid_dimension(d):
    with pytest.raises(ScenarioError):
        make_qrac_scenario(d)


def test_rewarded_answer_follows_pair_encoding(s4):
    for z in range(16):
        a0, a1 = z % 4, z // 4
        assert s4.payoff[a0, 2 * z] > 0 and s4.payoff[a1, 2 * z + 1] > 0


def test_uniform_T(s4):
    assert eval_T(s4, uniform_behavior(s4)) == pytest.approx(0.25, abs=1e-15)


def test_eval_T_shape_mismatch(s4):
    with pytest.raises(ScenarioError):
        eval_T(s4, np.zeros((4, 31)))


def test_default_generation_set(s4):
    assert default_generation_set(s4, 1).inputs == ((0, 0),)
    assert default_generation_set(s4, 2).inputs == ((0, 0), (1, 1))
    x7 = default_generation_set(s4, 7)
    assert x7.distinct_z and len(x7) == 7
    assert [s4.pair(z) for z, _ in x7][:3] == [(0, 0), (1, 0), (2, 0)]
    with pytest.raises(ScenarioError):
        default_generation_set(s4, 17)
    with pytest.raises(ScenarioError):
        default_generation_set(s4, 0)


def test_generation_set_rejects_duplicates():
    with pytest.raises(ScenarioError):
        GenerationSet([(0, 0), (0, 0)])


def test_binarize_examples(s4):
    p = np.zeros((4, 32))
    for x in range(32):
        z, y = s4.split_x(x)
        p[s4.correct(z, y), x] = 1
    q = binarize(s4, p)
    assert np.all(q[0] == 1)
    assert np.allclose(binarize(s4, uniform_behavior(s4))[0], 0.25)


def test_validate_behavior():
    validate_behavior(np.full((2, 3), 0.5))
    with pytest.raises(ScenarioError):
        validate_behavior(np.full((2, 3), 0.6))


@settings(max_examples=50, deadline=None)
@given(seed1=hs.integers(0, 2**32 - 1), seed2=hs.integers(0, 2**32 - 1), a=hs.floats(0, 1))
def test_eval_T_is_linear(seed1, seed2, a):
    s = make_qrac_scenario(4)
    p, q = random_behavior(s, seed1), random_behavior(s, seed2)
    lhs = eval_T(s, a * p + (1 - a) * q)
    assert lhs == pytest.approx(a * eval_T(s, p) + (1 - a) * eval_T(s, q), abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(seed=hs.integers(0, 2**32 - 1), d=hs.integers(2, 5))
def test_binarization_preserves_T_and_is_idempotent(seed, d):
    s = make_qrac_scenario(d)
    p = random_behavior(s, seed)
    q = binarize(s, p)
    assert eval_T(binary_scenario(s), q) == pytest.approx(eval_T(s, p), abs=1e-12)
    if d > 2:
        assert np.array_equal(binarize(s, q), q)
    validate_behavior(q)


def test_fingerprint_distinguishes_dimensions(s2, s4):
    assert s2.fingerprint() != s4.fingerprint()
    assert make_qrac_scenario(4).fingerprint() == s4.fingerprint()
