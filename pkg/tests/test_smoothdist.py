import math

import numpy as np
import pytest

from smoothlift.boolfn import majority
from smoothlift.lift import all_block_inputs, random_lift
from smoothlift.smoothdist import (
    DegeneratePredicate, Explicit, Filtered, Predicate, RejectionBudgetExceeded, Uniform,
    anti_block_distribution, anti_block_kappa, anti_block_predicate, block_marginal, certify,
    majority_tilt_predicate, marginal_deviation_fraction, mask_predicate, random_smooth_explicit,
    smoothness_check,
)


def test_uniform_basics(rng):
    D = Uniform(2, 3)
    assert D.kappa == 1.0 and D.pmf().sum() == pytest.approx(1)
    assert D.sample(10, rng).shape == (10, 3)


def test_explicit_rejects_non_smooth():
    p = np.zeros(16)
    p[:4] = 0.25
    with pytest.raises(ValueError):
        Explicit(2, 2, p, 2.0)
    assert Explicit(2, 2, p, 4.0).kappa == 4.0


def test_explicit_csv_round_trip(rng):
    D = random_smooth_explicit(2, 2, 2.0, rng)
    back = Explicit.from_csv(D.to_csv(), 2, 2, D.kappa)
    assert np.array_equal(back.pmf(), D.pmf())


def test_point_mass_has_full_kappa():
    D = Explicit.point_mass(1, 3, 5)
    assert D.kappa == 8.0 and smoothness_check(D).passed


def test_mask_predicate_exact_kappa():
    pred = mask_predicate(2, 2, 0b0011, 0b0001)
    D = Filtered.build(2, 2, pred)
    assert D.certificate.exact and D.kappa == 4.0
    assert smoothness_check(D).kappa_observed == 4.0


def test_filtered_samples_satisfy_predicate(rng):
    F = random_lift(majority(3), 2, rng)
    D = Filtered.build(2, 3, majority_tilt_predicate(F, 1))
    X = D.sample(500, rng)
    assert np.all(F(X) == 1)
    assert D.kappa == 2.0


def test_degenerate_predicate_rejected():
    with pytest.raises(DegeneratePredicate):
        Filtered.build(2, 2, Predicate("never", lambda X: np.zeros(X.shape[0], dtype=bool)))


def test_rejection_budget_exceeded(rng):
    # certificate reports acceptance but the predicate never accepts
    from smoothlift.smoothdist import Certificate
    D = Filtered(30, 1, Predicate("never", lambda X: np.zeros(X.shape[0], dtype=bool)),
                 Certificate(0.5, "analytic", 0.5, 0.5))
    with pytest.raises(RejectionBudgetExceeded):
        D.sample(5, rng)


def test_monte_carlo_certificate_covers_truth(rng):
    pred = mask_predicate(7, 3, 0b111, 0b101)
    c = certify(pred, 7, 3, rng, samples=50000)
    assert c.mode == "monte-carlo" and c.low <= 1 / 8 <= c.high


@pytest.mark.parametrize("k", [3, 5])
def test_anti_block_kappa_matches_enumeration(k, rng):
    F = random_lift(majority(k), 2, rng)
    D = anti_block_distribution(F)
    assert D.certificate.mode == "enumeration"
    assert D.kappa == pytest.approx(anti_block_kappa(k), rel=1e-12)


def test_anti_block_large_domain_is_analytic(rng):
    F = random_lift(majority(15), 8, rng)
    D = anti_block_distribution(F)
    assert D.certificate.mode == "analytic"
    assert 2.5 < D.kappa < 2.6
    X = D.sample(200, rng)
    assert np.all(F(X) != F.inner[0].values[X[:, 0]])


def test_anti_block_kappa_known_value():
    assert anti_block_kappa(3) == 4.0
    assert math.isclose(anti_block_kappa(21), 2 / (1 - math.comb(20, 10) / 2**20))


def test_block_marginal_exact_and_deviation(rng):
    F = random_lift(majority(3), 2, rng)
    D = anti_block_distribution(F)
    m = block_marginal(D, 0)
    assert m.sum() == pytest.approx(1)
    assert 0.0 <= marginal_deviation_fraction(D, 0.5) <= 1.0
    assert marginal_deviation_fraction(Uniform(2, 3), 0.0) == 0.0


def test_block_marginal_estimate(rng):
    F = random_lift(majority(15), 8, rng)
    est, counts = block_marginal(anti_block_distribution(F), 1, rng, samples=20000)
    assert counts.sum() == 20000 and est.shape == (256,)


def test_block_marginal_index_error():
    with pytest.raises(IndexError):
        block_marginal(Uniform(2, 3), 3)


def test_anti_block_predicate_definition(rng):
    F = random_lift(majority(3), 2, rng)
    X = all_block_inputs(2, 3)
    assert np.array_equal(anti_block_predicate(F)(X), F(X) != F.inner[0].values[X[:, 0]])
