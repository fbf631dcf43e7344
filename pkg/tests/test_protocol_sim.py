import numpy as np
import pytest

from dimcert.ingest import estimate_T, read_counts, write_counts
from dimcert.protocol_sim import (
    ESTIMATION,
    ProtocolConfig,
    noisy_strategy,
    simulate_rounds,
)
from dimcert.scenario import default_generation_set, eval_T
from dimcert.strategy import behavior_of, ideal_qrac_strategy


@pytest.fixture(scope="module")
def ideal4():
    return ideal_qrac_strategy(4)


def run(s4, st, n, seed=0, v=1.0, g=2.0, K=1):
    cfg = ProtocolConfig(n, default_generation_set(s4, K), mean_group=g, visibility=v, seed=seed)
    return simulate_rounds(cfg, st, s4)


def test_noisy_T_is_linear_in_visibility(s4, ideal4):
    for v in (0.0, 0.5, 0.9694):
        t = eval_T(s4, behavior_of(noisy_strategy(ideal4, v)))
        assert t == pytest.approx(0.25 + 0.5 * v, abs=1e-12)


def test_round_log_invariants(s4, ideal4):
    counts, log = run(s4, ideal4, 5000, K=3)
    assert len(log) == 5000
    starts = np.flatnonzero(np.diff(log.group, prepend=-1))
    assert (log.role[starts] == ESTIMATION).all()
    assert (log.role == ESTIMATION).sum() == starts.size == counts.counts.sum()
    gen = log.role != ESTIMATION
    xs = set(default_generation_set(s4, 3).inputs)
    assert set(zip(log.z[gen].tolist(), log.y[gen].tolist())) <= xs
    # a group reuses one generation input
    for grp in np.unique(log.group[gen])[:50]:
        sel = gen & (log.group == grp)
        assert np.unique(log.z[sel]).size == 1 and np.unique(log.y[sel]).size == 1


def test_half_of_rounds_estimate_for_mean_two(s4, ideal4):
    _, log = run(s4, ideal4, 200_000, seed=1)
    assert (log.role == ESTIMATION).mean() == pytest.approx(0.5, abs=0.01)
    _, log = run(s4, ideal4, 200_000, seed=1, g=8)
    assert (log.role == ESTIMATION).mean() == pytest.approx(1 / 8, abs=0.01)


def test_deterministic(s4, ideal4, tmp_path):
    a, la = run(s4, ideal4, 3000, seed=11, v=0.9)
    b, lb = run(s4, ideal4, 3000, seed=11, v=0.9)
    assert np.array_equal(a.counts, b.counts) and np.array_equal(la.b, lb.b)
    c, _ = run(s4, ideal4, 3000, seed=12, v=0.9)
    assert not np.array_equal(a.counts, c.counts)
    write_counts(tmp_path / "a.csv", a)
    la.write_csv(tmp_path / "log.csv")
    assert np.array_equal(read_counts(tmp_path / "a.csv").counts, a.counts)
    assert (tmp_path / "log.csv").read_text().count("\n") == 3001


def test_standard_error_scales_as_inverse_root_n(s4, ideal4):
    ses = [estimate_T(run(s4, ideal4, n, seed=2, v=0.9)[0])[1] for n in (40_000, 640_000)]
    assert ses[0] / ses[1] == pytest.approx(4.0, rel=0.05)


def test_estimate_is_unbiased(s4, ideal4):
    v = 0.9
    est = np.array([estimate_T(run(s4, ideal4, 20_000, seed=k, v=v)[0]) for k in range(40)])
    mean, se = est[:, 0].mean(), est[:, 1].mean() / np.sqrt(len(est))
    assert abs(mean - (0.25 + 0.5 * v)) < 4 * se
    # the reported error matches the spread across seeds
    assert est[:, 0].std(ddof=1) == pytest.approx(est[:, 1].mean(), rel=0.35)


def test_config_validation():
    xp = ((0, 0),)
    with pytest.raises(ValueError):
        ProtocolConfig(0, xp)
    with pytest.raises(ValueError):
        ProtocolConfig(10, xp, mean_group=1.5)
    with pytest.raises(ValueError):
        ProtocolConfig(10, xp, visibility=1.2)
