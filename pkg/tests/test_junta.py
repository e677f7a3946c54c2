import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from smoothlift.boolfn import BooleanFunction, majority, parity, random_function
from smoothlift.junta import (
    ConsistencyError, CorrelationVector, DensityDistribution, JuntaCertificate, SoftJuntaSearch,
    alpha_correlated_distance, alpha_correlated_error, alpha_correlated_variance, best_junta_on,
    conditional_mean, conditional_means, conditional_means_direct, derandomized_rounding,
    dictator_advantage, junta_complexity, least_spread_density_distribution,
    maj_best_halfjunta_agreement, mask_errors, permute_inputs, random_density_distribution,
    relevant_coordinates, rounding_expected_error, soft_junta_upper,
)


def brute_best_junta(g, support):
    # try every function of the supported coordinates
    coords = [i for i in range(g.n) if support >> i & 1]
    r = len(coords)
    best = 1.0
    for inner in itertools.product([-1, 1], repeat=1 << r):
        dis = 0
        for x in range(g.size):
            sub = sum(((x >> c) & 1) << j for j, c in enumerate(coords))
            dis += inner[sub] != g.values[x]
        best = min(best, dis / g.size)
    return best


def channel_enumeration(g, alpha):
    # E_x[(1 - |E[g(y) | x]|) / 2] by summing over every (x, y)
    k = g.n
    err = 0.0
    for x in range(1 << k):
        t = 0.0
        for y in range(1 << k):
            p = 1.0
            for i in range(k):
                same = (x >> i & 1) == (y >> i & 1)
                p *= (1 + alpha[i]) / 2 if same else (1 - alpha[i]) / 2
            t += p * g.values[y]
        err += (1 - abs(t)) / 2
    return err / (1 << k)


def test_maj3_junta_complexity():
    g = majority(3)
    assert junta_complexity(g, 0.25)[0] == 1
    assert junta_complexity(g, 0.24)[0] == 3


def test_junta_certificate_is_valid(rng):
    g = random_function(4, rng)
    r, cert = junta_complexity(g, 0.2)
    assert cert.size == r
    h = cert.as_function(4)
    assert np.mean(h.values != g.values) == cert.achieved_distance <= 0.2
    assert JuntaCertificate.from_json(cert.to_json()) == cert


@pytest.mark.parametrize("k", [2, 3, 4])
def test_best_junta_against_all_inner_functions(k, rng):
    g = random_function(k, rng)
    for support in range(1 << k):
        if bin(support).count("1") <= 2:
            assert best_junta_on(g, support).achieved_distance == brute_best_junta(g, support)


def test_half_junta_agreement_values():
    assert maj_best_halfjunta_agreement(4) == 0.8125
    assert maj_best_halfjunta_agreement(6) == 0.75
    with pytest.raises(ValueError):
        maj_best_halfjunta_agreement(5)


def test_density_distribution_validation():
    with pytest.raises(ValueError):
        DensityDistribution(2, np.array([1.0, 0, 0, 0]), 0.5)
    H = DensityDistribution.uniform_on(2, [0, 3])
    assert H.c == 0.5 and H.observed_density() == 0.5


def test_random_density_distribution_respects_cap(rng):
    for c in (0.1, 0.5, 0.9):
        H = random_density_distribution(5, c, rng)
        assert H.pmf.max() <= 1 / (c * 32) + 1e-12
        assert abs(H.pmf.sum() - 1) < 1e-12


def test_density_csv_round_trip(rng):
    H = random_density_distribution(3, 0.5, rng)
    back = DensityDistribution.from_csv(H.to_csv(), 0.5)
    assert np.array_equal(back.pmf, H.pmf)


@pytest.mark.parametrize("k", [3, 5, 7])
def test_dictator_identity_exact(k, rng):
    for _ in range(5):
        d = dictator_advantage(random_density_distribution(k, rng.uniform(0.1, 1), rng))
        assert abs(d.avg - d.mean_per_coordinate) <= 1e-12


def test_dictator_uniform_value():
    # E|x1+x2+x3|/3 = 1/2 under the uniform distribution
    assert dictator_advantage(DensityDistribution.uniform(3)).avg == 0.5


def test_dictator_rejects_even_k():
    with pytest.raises(ValueError):
        dictator_advantage(DensityDistribution.uniform(4))


def test_least_spread_distribution_minimizes_abs_sum():
    # brute force over uniform distributions on subsets of the right size, k = 3
    k, c = 3, 0.25
    H = least_spread_density_distribution(k, c)
    sums = np.abs([2 * bin(x).count("1") - k for x in range(1 << k)])
    best = min(np.mean(sums[list(s)]) for s in itertools.combinations(range(8), 2))
    assert float(H.pmf @ sums) == pytest.approx(best)


def test_parity_channel_values():
    g = parity(2)
    assert conditional_mean(g, [0.6, 0.5], 0b11) == pytest.approx(0.3)
    assert alpha_correlated_error(g, [0.6, 0.5]) == pytest.approx(0.35)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 4).flatmap(lambda k: st.tuples(
    st.lists(st.sampled_from([-1, 1]), min_size=1 << k, max_size=1 << k),
    st.lists(st.floats(-1, 1), min_size=k, max_size=k))))
def test_channel_matches_enumeration(case):
    values, alpha = case
    g = BooleanFunction.from_values(values)
    assert alpha_correlated_error(g, alpha) == pytest.approx(channel_enumeration(g, alpha), abs=1e-12)
    assert np.allclose(conditional_means(g, alpha), conditional_means_direct(g, alpha), atol=1e-12)


def test_channel_extremes(rng):
    g = random_function(4, rng)
    assert alpha_correlated_error(g, np.ones(4)) == 0.0
    assert alpha_correlated_error(g, np.zeros(4)) == pytest.approx((1 - abs(g.bias())) / 2)


def test_alpha_correlated_distance_at_full_correlation(rng):
    g, h = random_function(3, rng), random_function(3, rng)
    assert alpha_correlated_distance(g, h, np.ones(3)) == pytest.approx(np.mean(g.values != h.values))


def test_variance_two_ways_and_sandwich(rng):
    for _ in range(20):
        k = int(rng.integers(1, 6))
        g, a = random_function(k, rng), rng.uniform(-1, 1, k)
        direct, spectral = alpha_correlated_variance(g, a)
        err = alpha_correlated_error(g, a)
        assert abs(direct - spectral) <= 1e-9
        assert 2 * err - 1e-12 <= direct <= 4 * err + 1e-12


def test_variance_mismatch_raises(rng):
    g = random_function(3, rng)
    with pytest.raises(ConsistencyError):
        alpha_correlated_variance(g, [0.3, 0.2, 0.1], tol=-1.0)


def test_rounding_double_error(rng):
    for _ in range(30):
        k = int(rng.integers(1, 7))
        g, a = random_function(k, rng), rng.uniform(-1, 1, k)
        assert rounding_expected_error(g, a) <= 2 * alpha_correlated_error(g, a) + 1e-12


def test_mask_errors_zero_on_relevant_set(rng):
    g = random_function(3, rng)
    assert mask_errors(g)[relevant_coordinates(g)] == 0.0


def test_soft_junta_parity_closed_form():
    # symmetric optimum for parity_k: error (1 - prod alpha)/2 = delta
    for k, delta in [(2, 0.1), (3, 0.2), (4, 0.05)]:
        value, alpha = soft_junta_upper(parity(k), delta)
        assert value == pytest.approx(k * (1 - 2 * delta) ** (2 / k), abs=1e-8)
        assert alpha_correlated_error(parity(k), alpha.alpha) <= delta + 1e-9


def test_soft_junta_grid_oracle(rng):
    # exhaustive search over a coarse grid of alpha^2 is never better than the search
    grid = 8
    for _ in range(5):
        g = random_function(2, rng)
        delta = 0.15
        value, _ = soft_junta_upper(g, delta, SoftJuntaSearch(grid=grid))
        best = min(
            (a + b) / grid for a in range(grid + 1) for b in range(grid + 1)
            if alpha_correlated_error(g, np.sqrt([a / grid, b / grid])) <= delta + 1e-12
        )
        assert value <= best + 1e-9


def test_soft_junta_sandwich(rng):
    for _ in range(10):
        g = random_function(int(rng.integers(1, 5)), rng)
        for delta in (0.05, 0.1, 0.2):
            value, alpha = soft_junta_upper(g, delta)
            assert value <= junta_complexity(g, delta)[0] + 1e-9
            z = derandomized_rounding(g, alpha.alpha, delta)
            assert z is not None
            assert junta_complexity(g, min(1, 4 * delta))[0] <= bin(z).count("1") <= 2 * value + 1e-9


def test_correlation_vector_json():
    v = CorrelationVector(np.array([0.5, -0.25]))
    assert CorrelationVector.from_json(v.to_json()).squared_norm() == 0.3125
    with pytest.raises(ValueError):
        CorrelationVector(np.array([1.5]))


def test_permute_inputs_preserves_complexity(rng):
    g = random_function(4, rng)
    h = permute_inputs(g, [2, 0, 3, 1])
    assert junta_complexity(g, 0.1)[0] == junta_complexity(h, 0.1)[0]


def test_half_junta_k4_in_range():
    assert 0.75 <= maj_best_halfjunta_agreement(4) <= 0.9


def test_dictator_point_mass_and_uniform_max():
    pmf = np.zeros(8)
    pmf[7] = 1.0
    assert dictator_advantage(DensityDistribution(3, pmf, 1 / 8)).avg == 1.0
    assert dictator_advantage(DensityDistribution.uniform(3)).max_i == 0.5


@pytest.mark.parametrize("k", [3, 5, 7, 9, 11])
def test_calibrated_dictator_constant_on_worst_case(k):
    # the greedy least-spread pmf is the minimizer of avg at each density
    for c in (0.05, 0.1, 0.25, 0.5, 0.75, 1.0):
        d = dictator_advantage(least_spread_density_distribution(k, c))
        assert d.avg >= c * math.sqrt(k) / 20
