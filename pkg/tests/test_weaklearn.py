import math

import numpy as np
import pytest

from smoothlift.boolfn import dictator, majority
from smoothlift.lift import all_block_inputs, make_lift, random_lift
from smoothlift.smoothdist import Explicit, Uniform, anti_block_distribution, random_smooth_explicit
from smoothlift.weaklearn import (
    LabeledSample, advantage, draw_sample, empirical_advantages, expected_tables_exact,
    expected_tables_formula, g_correlation, g_tail, hypothesis_family, memorizing_weak_learner,
    select, threshold_bound, threshold_smoothing_value, train_tables, uniform_convergence_size,
    weak_learn,
)


def test_last_write_wins():
    S = LabeledSample(1, [[0, 1], [0, 0], [0, 1]], [1, -1, -1])
    T = train_tables(S, 1, 2)
    assert T.tables[0].tolist() == [-1, 0]
    assert T.tables[1].tolist() == [-1, -1]
    assert T.writes[0].tolist() == [3, 0]


def test_score_is_sum_of_lookups(rng):
    F = random_lift(majority(3), 2, rng)
    T = train_tables(draw_sample(F, Uniform(2, 3), 10, rng), 2, 3)
    X = all_block_inputs(2, 3)
    manual = sum(T.tables[i, X[:, i]].astype(int) for i in range(3))
    assert np.array_equal(T.score(X), manual)


def test_sample_csv_round_trip(rng):
    F = random_lift(majority(3), 3, rng)
    S = draw_sample(F, Uniform(3, 3), 12, rng)
    back = LabeledSample.from_csv(S.to_csv(), 3, 3)
    assert np.array_equal(back.points, S.points) and np.array_equal(back.labels, S.labels)
    assert back.consistent_with(F)


def test_family_order_and_size():
    T = train_tables(LabeledSample(1, np.zeros((0, 3)), []), 1, 3)
    fam = hypothesis_family(T, 2)
    assert [h.label for h in fam] == ["const+1", "const-1", "tau=-2", "tau=-1", "tau=0", "tau=1", "tau=2"]


def test_select_ties_go_to_first():
    T = train_tables(LabeledSample(1, np.zeros((0, 3)), []), 1, 3)
    fam = hypothesis_family(T, 1)
    h, adv = select(fam, LabeledSample(1, np.zeros((0, 3)), []))
    assert h.constant == 1 and np.all(adv == 0)


def test_threshold_bound_formula():
    assert threshold_bound(21, 1.0) == math.ceil(math.sqrt(21 * math.log(2 * 441)) + math.sqrt(21))


def test_threshold_smoothing():
    assert threshold_smoothing_value(0.5, 2.0) == 0.25
    assert threshold_smoothing_value(-5, 2.0) == -1.0


def test_uniform_convergence_size():
    assert uniform_convergence_size(10, 0.1, 0.1) == math.ceil(math.log(200) / 0.02)


def test_expected_table_identity(rng):
    # exhaustive over all m-point samples against q_i(x) mu_i(x)
    F = make_lift(majority(3), [dictator(1, 0)] * 3)
    support = all_block_inputs(1, 3)[[0, 3, 5, 6]]
    probs = np.array([0.1, 0.2, 0.3, 0.4])
    for m in (1, 2, 3):
        assert np.allclose(expected_tables_exact(F, support, probs, m),
                           expected_tables_formula(F, support, probs, m), atol=1e-12)


def test_exact_and_monte_carlo_advantage_agree(rng):
    F = random_lift(majority(3), 3, rng)
    D = Uniform(3, 3)
    T = train_tables(draw_sample(F, D, 40, rng), 3, 3)
    h = hypothesis_family(T, 3)[4]
    exact = advantage(h, F, D)
    mc = advantage(h, F, D, mode="monte-carlo", samples=40000, rng=rng)
    assert abs(exact.value - mc.value) <= 5 * mc.stderr + 1e-9
    assert g_tail(T, D, 3).value <= 1


def test_weak_learn_small_exact(rng):
    F = random_lift(majority(5), 2, rng)
    r = weak_learn(F, Uniform(2, 5), 64, rng)
    d = r.diagnostics
    assert d["advantage"] > 0 and d["advantage_stderr"] == 0.0
    assert len(d["per_block_correlations"]) == 5
    assert d["g_correlation"] == pytest.approx(g_correlation(r.tables, F, Uniform(2, 5)).value)


def test_weak_learn_zero_samples(rng):
    F = random_lift(majority(3), 2, rng)
    r = weak_learn(F, Uniform(2, 3), 0, rng)
    assert r.hypothesis.constant == 1 and r.diagnostics["g_correlation"] == 0.0


def test_weak_learn_anti_block_large(rng):
    F = random_lift(majority(21), 10, rng)
    r = weak_learn(F, anti_block_distribution(F), 1024, rng, eval_samples=20000)
    assert r.diagnostics["per_block_correlations"][0] < 0


def test_memorizer_exact_identity(rng):
    for _ in range(10):
        D = random_smooth_explicit(2, 3, 2.0, rng)
        target = np.where(rng.random(64) < 0.5, 1.0, -1.0)
        idx = rng.choice(64, size=20, p=D.pmf())
        h = memorizing_weak_learner(idx, target[idx], 64)
        assert abs(h.expected_advantage(D.pmf(), target) - D.pmf()[np.unique(idx)].sum()) <= 1e-12


def test_memorizer_fixed_tie_and_errors():
    h = memorizing_weak_learner([0], [1], 4, tie=-1)
    assert h.predict(np.arange(4)).tolist() == [1, -1, -1, -1]
    with pytest.raises(ValueError):
        memorizing_weak_learner([5], [1], 4)
    with pytest.raises(ValueError):
        memorizing_weak_learner([0], [1], 4, tie=0)
    with pytest.raises(ValueError):
        memorizing_weak_learner([0], [1], 4).predict(np.arange(4))


def test_empirical_advantages_of_constants():
    S = LabeledSample(1, [[0], [1], [1]], [1, 1, -1])
    T = train_tables(S, 1, 1)
    adv = empirical_advantages(hypothesis_family(T, 1)[:2], S)
    assert adv.tolist() == pytest.approx([1 / 3, -1 / 3])


def test_full_truth_tables_g_correlation_identity(rng):
    # tables equal to the inner functions: E[F G] = sum_i E[F f_i]
    from smoothlift.weaklearn import BlockTables

    F = random_lift(majority(5), 3, rng)
    table = F.inner_table()
    T = BlockTables(table.copy(), np.ones_like(table, dtype=np.int64))
    X = all_block_inputs(3, 5)
    y = F(X)
    expected = sum(np.mean(y * table[i, X[:, i]]) for i in range(5))
    got = g_correlation(T, F, Uniform(3, 5)).value
    assert got == pytest.approx(expected, abs=1e-12) and got > 0


def test_empty_tables_zero_correlation(rng):
    F = random_lift(majority(3), 2, rng)
    T = train_tables(LabeledSample(2, np.zeros((0, 3)), []), 2, 3)
    assert g_correlation(T, F, Uniform(2, 3)).value == 0.0


def test_zero_samples_gives_first_constant_with_bias_advantage(rng):
    F = random_lift(majority(4), 2, rng)  # even k: sign(0)=+1 biases F upward
    D = Uniform(2, 4)
    r = weak_learn(F, D, 0, rng)
    bias = float(np.mean(F(all_block_inputs(2, 4))))
    assert r.hypothesis.constant == 1 and r.diagnostics["advantage"] == pytest.approx(bias)
