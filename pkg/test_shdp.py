import math

import numpy as np
import pytest
from scipy import integrate, stats
from scipy.special import gammaln

from shdp.errors import ArgumentError, DomainError, FeasibilityError
from shdp.models.franchise import DishAtom, FranchiseState
from shdp.models.params import NormalInverseGammaParams
from shdp.services.conjugate import nig_marginal_loglik
from shdp.services.symmetric_hdp import (
    antoniak_pmf,
    crf_generate,
    dish_full_conditional,
    hdp_peppf_log,
    new_dish_logpdf,
    nig_base_sampler,
    pair_logpdf,
    predictive_density,
    sdp_polya_urn,
    shdp_peppf_log,
    sign_full_conditional,
    signed_outcome,
    signed_outcome_probabilities,
    stick_breaking_sdp,
    stirling1_unsigned_table,
    table_full_conditional,
)

PRIOR = NormalInverseGammaParams(0.0, 1.0, 2.0, 4.0)


def small_franchise() -> FranchiseState:
    state = FranchiseState([2, 1], [1.0, 1.0], 1.5)
    first = state.open_dish(DishAtom(1.0, 0.5))
    second = state.open_dish(DishAtom(-0.5, 2.0))
    t0 = state.open_table(0, first)
    t1 = state.open_table(1, second)
    state.add_customer(0, 0, t0, 1)
    state.add_customer(0, 1, t0, -1)
    state.add_customer(1, 0, t1, 1)
    return state


def test_stirling_rows_sum_to_factorial():
    table = stirling1_unsigned_table(12)
    for n in range(13):
        assert np.logaddexp.reduce(table[n]) == pytest.approx(gammaln(n + 1), abs=1e-10)
    assert math.exp(table[4, 2]) == pytest.approx(11.0)
    with pytest.raises(FeasibilityError):
        stirling1_unsigned_table(5000)


def test_antoniak_normalization():
    for n in (1, 5, 40):
        for gamma in (0.3, 1.0, 7.0):
            pmf = antoniak_pmf(n, gamma)
            assert len(pmf) == n
            assert pmf.sum() == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(DomainError):
        antoniak_pmf(3, 0.0)
    with pytest.raises(ArgumentError):
        antoniak_pmf(0, 1.0)


def test_peppf_sign_identity():
    counts = np.array([[2, 1], [0, 1]])
    plus = np.array([[1, 0], [0, 1]])
    unsigned = hdp_peppf_log(counts, 1.3, 0.7)
    assert shdp_peppf_log(plus, counts - plus, 1.3, 0.7) == pytest.approx(unsigned - 4 * math.log(2.0))
    with pytest.raises(FeasibilityError):
        hdp_peppf_log(np.array([[7, 7]]), 1.0, 1.0)


def test_single_restaurant_peppf_is_a_dp():
    # with one restaurant the dish partition of two customers is a DP(gamma, alpha) composition
    together = math.exp(hdp_peppf_log([[2]], 1.0, 1.0))
    apart = math.exp(hdp_peppf_log([[1, 1]], 1.0, 1.0))
    assert together + apart == pytest.approx(1.0)
    # same table (1/2) or a new table that picks the same dish (1/2 * 1/2)
    assert together == pytest.approx(0.75)


def test_franchise_draw_is_consistent():
    rng = np.random.default_rng(11)
    state = crf_generate([1.0, 2.0], 1.5, [5, 3], rng)
    assert state.audit() == []
    assert len(state.dish_labels()) == 8
    assert set(state.signs().tolist()) <= {1, -1}


def test_pair_density_is_symmetric():
    xi, s2 = np.array([1.2, -0.4]), np.array([0.5, 2.0])
    np.testing.assert_allclose(pair_logpdf(0.8, xi, s2), pair_logpdf(-0.8, xi, s2))
    np.testing.assert_allclose(pair_logpdf(0.8, xi, s2), pair_logpdf(0.8, -xi, s2))
    assert new_dish_logpdf(0.8, PRIOR) == pytest.approx(new_dish_logpdf(-0.8, PRIOR))
    value, _ = integrate.quad(lambda e: math.exp(new_dish_logpdf(e, PRIOR)), -np.inf, np.inf)
    assert value == pytest.approx(1.0, abs=1e-8)


def test_sign_conditional():
    atom = DishAtom(1.0, 0.5)
    assert sign_full_conditional(atom, 0.0) == pytest.approx(0.5)
    assert sign_full_conditional(atom, 0.3) + sign_full_conditional(atom, -0.3) == pytest.approx(1.0)
    assert sign_full_conditional(atom, 2.0) > 0.99


def test_table_conditional_shape():
    state = small_franchise()
    record = state.remove_customer(0, 1)
    conditional = table_full_conditional(state, 0.4, 0, PRIOR)
    assert len(conditional.probabilities()) == state.n_tables(0) + 1
    assert conditional.probabilities().sum() == pytest.approx(1.0)
    assert len(conditional.dish_probabilities()) == state.n_dishes + 1
    state.restore_customer(record)
    assert state.audit() == []


def test_dish_conditional_new_dish_weight():
    state = small_franchise()
    conditional = dish_full_conditional(state, np.array([0.2, -0.1]), PRIOR)
    assert conditional.dish_ids == [0, 1]
    expected = math.log(state.alpha) + nig_marginal_loglik(PRIOR, [0.2, -0.1])
    assert conditional.log_weights[-1] == pytest.approx(expected)


def test_predictive_density_integrates_to_one():
    state = small_franchise()
    grid = np.linspace(-25, 25, 20001)
    for j in range(2):
        density = predictive_density(state.snapshot(), j, grid, PRIOR)
        assert np.all(density >= 0)
        np.testing.assert_allclose(density, density[::-1], rtol=1e-9)
        assert integrate.trapezoid(density, grid) == pytest.approx(1.0, abs=1e-3)


def test_stick_breaking_draw_is_symmetric():
    rng = np.random.default_rng(5)
    draw = stick_breaking_sdp(2.0, nig_base_sampler(PRIOR), 200, rng)
    assert draw.weights.sum() + draw.tail_mass == pytest.approx(1.0)
    np.testing.assert_allclose(draw.xi[0::2], -draw.xi[1::2])
    np.testing.assert_allclose(draw.weights[0::2], draw.weights[1::2])
    residuals = draw.sample_residuals(50000, rng)
    assert abs(np.mean(residuals)) < 4 * np.std(residuals) / math.sqrt(50000) + 0.02
    with pytest.raises(ArgumentError):
        stick_breaking_sdp(2.0, nig_base_sampler(PRIOR), 0, rng)


def test_polya_urn_pair_counts():
    rng = np.random.default_rng(9)
    alpha, n, reps = 1.0, 6, 4000
    distinct = np.array([len(set(sdp_polya_urn(alpha, n, nig_base_sampler(PRIOR), rng)[0].tolist()))
                         for _ in range(reps)])
    expected = float(np.sum(alpha / (alpha + np.arange(n))))
    assert distinct.mean() == pytest.approx(expected, abs=4 * distinct.std() / math.sqrt(reps))
    pair, xi, sigma2 = sdp_polya_urn(alpha, 500, nig_base_sampler(PRIOR), rng)
    for h in np.unique(pair):
        assert len(set(np.abs(xi[pair == h]).round(12).tolist())) == 1
        assert len(set(sigma2[pair == h].tolist())) == 1


def test_signed_outcome_law_is_normalized():
    for sizes in ([1], [4], [1, 3], [2, 2]):
        law = signed_outcome_probabilities(sizes, 1.0, 1.5)
        assert sum(law.values()) == pytest.approx(1.0, abs=1e-12)
        assert all(p > 0 for p in law.values())
    with pytest.raises(FeasibilityError):
        signed_outcome_probabilities([5, 4], 1.0, 1.0)


def test_crf_matches_peppf():
    rng = np.random.default_rng(41)
    sizes, draws = [2, 1], 20000
    law = signed_outcome_probabilities(sizes, 1.0, 1.5)
    keys = sorted(law)
    counts = dict.fromkeys(keys, 0)
    for _ in range(draws):
        counts[signed_outcome(crf_generate(1.0, 1.5, sizes, rng))] += 1
    assert len(counts) == len(keys)

    observed = np.array([counts[k] for k in keys], dtype=float)
    expected = np.array([law[k] for k in keys]) * draws
    small = expected < 5
    if small.any():
        observed = np.append(observed[~small], observed[small].sum())
        expected = np.append(expected[~small], expected[small].sum())
    expected *= observed.sum() / expected.sum()
    assert stats.chisquare(observed, expected).pvalue > 1e-4
