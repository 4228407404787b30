import math
import os

import numpy as np
import pytest
from scipy import stats

from shdp.commands.fit import run_single_chain
from shdp.errors import NumericalError
from shdp.models.chain import MCMCOptions, ModelConfig
from shdp.models.params import GammaPrior
from shdp.models.partition import SetPartition
from shdp.services.checkpoint import read_records
from shdp.services.data import simulate
from shdp.services.partitions import is_order_consistent, location_prior, restricted_prior
from shdp.services.sampler import (
    auxiliary_concentration_update,
    check_state,
    init_state,
    make_record,
    run_chain,
    sample_concentrations,
    sample_omega_escobar_west,
    sample_omega_sir,
    sir_log_weights,
    sweep,
    working_data,
)
from shdp.services.validation import (
    PEPPF_LAYOUTS,
    check_dgp1_outlier,
    check_peppf_monte_carlo,
    check_prior_only_gibbs,
    check_table1_replicates,
    omega_posterior_cdf,
    prior_only_frequencies,
    standardized_chisquare,
)
from shdp.utils.helpers import systematic_resample

SIZES = [6, 4, 3, 5]
RECORD_FIELDS = {'iter', 'chain', 'm', 'theta', 'partition', 'dish_label_per_patient', 'sign',
                 'n_dishes', 'omega', 'gamma', 'alpha', 'mixture'}


def small_data(n_responses=1):
    return working_data(simulate('main', SIZES, seed=1, n_responses=n_responses), ModelConfig())


def collect(data, config, options, seed, chain=0):
    rng = np.random.default_rng(seed)
    return [r for batch in run_chain(data, config, options, rng, chain=chain) for r in batch]


def test_init_state():
    data = small_data(2)
    state = init_state(data, ModelConfig(), np.random.default_rng(0))
    assert state.theta.shape == (2, 4)
    assert state.iteration == 0
    assert all(f.n_dishes == 1 for f in state.franchises)
    assert all(f.audit() == [] for f in state.franchises)
    check_state(state, ModelConfig.MODE_RESTRICTED)


def test_sweep_keeps_state_valid():
    data = small_data()
    rng = np.random.default_rng(2)
    for mode in ModelConfig.VALID_MODES:
        config = ModelConfig(prior_mode=mode)
        state = init_state(data, config, rng)
        for _ in range(5):
            sweep(state, data, config, rng, omega_pool_size=200)
            check_state(state, mode)
        assert state.iteration == 5
        assert state.franchises[0].audit() == []
        if mode != ModelConfig.MODE_DP:
            assert is_order_consistent(SetPartition(state.labels[0]))


def test_run_chain_records():
    data = small_data(2)
    options = MCMCOptions(iterations=6, burn_in=2, thin=2, audit_interval=2, omega_pool_size=100)
    records = collect(data, ModelConfig(), options, seed=3)
    assert len(records) == options.n_emitted() * 2
    assert [r['iter'] for r in records] == [4, 4, 6, 6]
    for record in records:
        assert set(record) == RECORD_FIELDS
        assert len(record['dish_label_per_patient']) == sum(SIZES)
        assert set(record['sign']) <= {1, -1}
        assert len(record['theta']) == 4
        assert is_order_consistent(SetPartition(record['partition']))
        assert record['n_dishes'] == len(set(record['dish_label_per_patient']))


def test_same_seed_same_records():
    data = small_data()
    options = MCMCOptions(iterations=5, burn_in=1, omega_pool_size=100)
    assert collect(data, ModelConfig(), options, seed=8) == collect(data, ModelConfig(), options, seed=8)
    assert collect(data, ModelConfig(), options, seed=8) != collect(data, ModelConfig(), options, seed=9)


def test_resume_matches_uninterrupted_run(tmp_path):
    data = small_data()
    config = ModelConfig()
    seed = np.random.SeedSequence(42)
    full = MCMCOptions(iterations=6, burn_in=2, checkpoint_interval=3, omega_pool_size=100)
    first_leg = MCMCOptions(iterations=3, burn_in=2, checkpoint_interval=3, omega_pool_size=100)

    straight, interrupted = str(tmp_path / 'straight'), str(tmp_path / 'resumed')
    run_single_chain(data, config, full, 0, seed, straight)
    run_single_chain(data, config, first_leg, 0, seed, interrupted)
    result = run_single_chain(data, config, full, 0, seed, interrupted, resume=True)

    assert result['resumed_from'] == 3
    assert result['emitted_this_run'] == 3
    expected = list(read_records(os.path.join(straight, 'chain_0.ndjson')))
    resumed = list(read_records(os.path.join(interrupted, 'chain_0.ndjson')))
    assert [r['iter'] for r in resumed] == [3, 4, 5, 6]
    assert resumed == expected


def test_make_record_uses_stable_dish_ids():
    data = small_data()
    state = init_state(data, ModelConfig(), np.random.default_rng(4))
    record = make_record(state, 0)
    assert record['dish_label_per_patient'] == [0] * sum(SIZES)
    assert record['mixture']['menu'][0][0] == 0


def test_check_state_rejects_non_finite():
    data = small_data()
    state = init_state(data, ModelConfig(), np.random.default_rng(5))
    state.theta[0, 1] = math.nan
    with pytest.raises(NumericalError):
        check_state(state, ModelConfig.MODE_RESTRICTED)


def test_sir_weight_at_unit_omega():
    weight = math.exp(float(sir_log_weights(np.array([1.0]), [1], 4)[0]))
    assert weight == pytest.approx(1 / 15, abs=1e-12)


def test_sir_targets_omega_posterior():
    rng = np.random.default_rng(6)
    prior = GammaPrior(3.0, 3.0)
    partitions = [SetPartition([0, 1, 2, 3])]
    draws = np.array([sample_omega_sir(partitions, prior, 1000, rng) for _ in range(3000)])
    # posterior over a fine grid: prior density times omega^3 / Z(omega)
    grid = np.linspace(1e-4, 15.0, 30001)
    log_post = stats.gamma.logpdf(grid, 3.0, scale=1 / 3.0) + sir_log_weights(grid, [4], 4)
    weights = np.exp(log_post - log_post.max())
    mean = float(np.sum(grid * weights) / np.sum(weights))
    sd = float(np.sqrt(np.sum((grid - mean) ** 2 * weights) / np.sum(weights)))
    assert draws.mean() == pytest.approx(mean, abs=4 * sd / math.sqrt(3000) + 0.02)


def test_prior_only_location_sampler():
    rng = np.random.default_rng(10)
    sweeps = 20000
    for mode in (ModelConfig.MODE_RESTRICTED, ModelConfig.MODE_UNIFORM):
        counts = prior_only_frequencies(mode, 1.0, 4, sweeps, rng)
        for p, prob in location_prior(mode, 1.0, 4):
            if prob == 0.0:
                assert counts.get(p, 0) == 0
            else:
                assert abs(counts.get(p, 0) / sweeps - prob) <= 4 * math.sqrt(prob * (1 - prob) / sweeps)
    counts = prior_only_frequencies(ModelConfig.MODE_DP, 1.0, 4, sweeps, rng, scans_per_draw=5)
    for p, prob in location_prior(ModelConfig.MODE_DP, 1.0, 4):
        assert counts.get(p, 0) / sweeps == pytest.approx(prob, abs=0.02)


def test_restricted_prior_reference_values():
    prior = restricted_prior(1.0, 4)
    assert prior.map_partition()[0] == SetPartition([0, 0, 0, 0])


def test_escobar_west_targets_posterior():
    rng = np.random.default_rng(12)
    prior = GammaPrior(3.0, 3.0)
    omega, draws = 1.0, np.empty(20000)
    for t in range(20200):
        omega = sample_omega_escobar_west([2, 3], 4, omega, prior, rng)
        if t >= 200:
            draws[t - 200] = omega
    assert stats.kstest(draws, omega_posterior_cdf([2, 3], 4, prior)).statistic < 0.03


def test_concentration_update_without_data_draws_prior():
    rng = np.random.default_rng(13)
    prior = GammaPrior(2.0, 4.0)
    draws = np.array([auxiliary_concentration_update(1.0, [0], [0], prior, rng) for _ in range(20000)])
    sd = math.sqrt(prior.shape) / prior.rate
    assert draws.mean() == pytest.approx(prior.mean, abs=4 * sd / math.sqrt(20000))


def test_tied_gamma_is_shared():
    data = small_data()
    state = init_state(data, ModelConfig(), np.random.default_rng(14))
    franchise = state.franchises[0]
    sample_concentrations(franchise, GammaPrior(), GammaPrior(), np.random.default_rng(15), tie_gamma=True)
    assert len(set(franchise.gamma.tolist())) == 1
    assert franchise.alpha > 0


def test_systematic_resample_counts():
    rng = np.random.default_rng(16)
    weights = np.array([0.5, 0.3, 0.15, 0.05])
    for size in (7, 20, 1000):
        counts = np.bincount(systematic_resample(np.log(weights), size, rng), minlength=4)
        assert counts.sum() == size
        assert np.all(counts >= np.floor(size * weights) - 1e-9)
        assert np.all(counts <= np.ceil(size * weights) + 1e-9)
    with pytest.raises(FloatingPointError):
        systematic_resample(np.array([-np.inf, -np.inf]), 3, rng)


def test_standardized_chisquare():
    law = {face: 1 / 6 for face in range(6)}
    rng = np.random.default_rng(17)
    rolls = rng.integers(0, 6, size=6000)
    counts = {face: int(np.sum(rolls == face)) for face in range(6)}
    assert abs(standardized_chisquare(counts, law)) <= 3.0
    loaded = {face: 1500 if face == 0 else 900 for face in range(6)}
    assert standardized_chisquare(loaded, law) > 3.0
    assert standardized_chisquare({0: 10, 6: 1}, law) == math.inf


def test_monte_carlo_checks_at_three_standard_errors():
    assert len(PEPPF_LAYOUTS) == 10
    assert {sum(sizes) for sizes in PEPPF_LAYOUTS} == {1, 2, 3, 4}
    for check, seed in ((check_peppf_monte_carlo, 18), (check_prior_only_gibbs, 19)):
        result = check(np.random.default_rng(seed), 0.05)
        assert result.threshold == 3.0
        assert result.statistic <= 4.0, result.detail


@pytest.mark.slow
def test_table1_replicates():
    result = check_table1_replicates(np.random.default_rng(0), 0.2, seed=3)
    assert result.passed, result.detail


@pytest.mark.slow
def test_dgp1_outlier_is_isolated():
    result = check_dgp1_outlier(np.random.default_rng(0), 0.2, seed=3)
    assert result.passed, result.detail
