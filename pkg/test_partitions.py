import math

import numpy as np
import pytest

from shdp.errors import ArgumentError, DomainError, PartitionBoundsError
from shdp.models.partition import PartitionDistribution, SetPartition
from shdp.services.partitions import (
    bell_number,
    binder_estimate,
    binder_loss,
    dp_prior,
    entropy,
    enumerate_contiguous_partitions,
    enumerate_set_partitions,
    is_order_consistent,
    restricted_normalizer,
    restricted_normalizer_log_array,
    restricted_prior,
    sample_restricted_partition,
    sequential_tie_weight,
    theta_tie_weight,
    tie_weight,
    uniform_prior,
)

# Posterior over the 15 partitions of {C, G, M, S} for the CI response of the hypertension study.
CI_COLUMN = [0.021, 0.002, 0.002, 0, 0.001, 0.463, 0, 0.146, 0, 0, 0, 0.233, 0, 0, 0.133]


def test_bell_numbers():
    assert [bell_number(n) for n in range(1, 7)] == [1, 2, 5, 15, 52, 203]
    for J in (4, 5, 6):
        parts = enumerate_set_partitions(J)
        assert len(parts) == bell_number(J)
        assert len(set(parts)) == len(parts)


def test_contiguous_partitions():
    for J in range(1, 7):
        parts = enumerate_contiguous_partitions(J)
        assert len(parts) == 2 ** (J - 1)
        assert all(is_order_consistent(p) for p in parts)
    assert not is_order_consistent(SetPartition([0, 1, 0, 1]))


def test_restricted_normalizer_closed_form():
    for omega in (0.1, 0.5, 1.0, 2.7, 10.0):
        expected = (omega + 2) * (omega ** 2 + omega + 3)
        assert restricted_normalizer(omega, 4) == pytest.approx(expected, rel=1e-10)
    assert restricted_normalizer(1.0, 4) == pytest.approx(15.0)
    grid = np.array([0.3, 1.0, 4.0])
    expected = np.log([restricted_normalizer(w, 4) for w in grid])
    np.testing.assert_allclose(restricted_normalizer_log_array(grid, 4), expected, rtol=1e-12)


def test_restricted_prior_at_unit_omega():
    prior = restricted_prior(1.0, 4)
    assert sum(prior.probabilities()) == pytest.approx(1.0)
    assert prior.probability(SetPartition([0, 0, 0, 0])) == pytest.approx(6 / 15)
    assert prior.probability(SetPartition([0, 1, 2, 3])) == pytest.approx(1 / 15)
    assert prior.probability(SetPartition([0, 1, 0, 1])) == 0.0


def test_closed_form_tie_weights():
    assert theta_tie_weight(1.0, 2, SetPartition([0])) == pytest.approx(2 / 3)
    assert theta_tie_weight(1.0, 3, SetPartition([0, 0])) == pytest.approx(0.8)
    assert theta_tie_weight(1.0, 3, SetPartition([0, 1])) == pytest.approx(0.6)
    assert theta_tie_weight(1.0, 4, SetPartition([0, 0, 0])) == pytest.approx(0.75)
    assert theta_tie_weight(1.0, 4, SetPartition([0, 1, 1])) == pytest.approx(2 / 3)
    assert theta_tie_weight(1.0, 4, SetPartition([0, 0, 1])) == pytest.approx(0.5)


def test_tie_weights_reproduce_prior():
    for omega in (0.2, 1.0, 3.5):
        prior = restricted_prior(omega, 4)
        for p in enumerate_contiguous_partitions(4):
            product = 1.0
            for j in range(2, 5):
                a = theta_tie_weight(omega, j, p.prefix(j - 1))
                product *= a if p.labels[j - 1] == p.labels[j - 2] else 1 - a
            assert product == pytest.approx(prior.probability(p), abs=1e-12)


def test_sequential_tie_weights():
    for omega in (0.4, 2.0):
        for p in enumerate_contiguous_partitions(4):
            for j in range(2, 5):
                assert sequential_tie_weight(omega, j, p.prefix(j - 1), 4) == \
                    pytest.approx(theta_tie_weight(omega, j, p.prefix(j - 1)), abs=1e-12)
        prior = restricted_prior(omega, 5)
        for p in enumerate_contiguous_partitions(5):
            product = 1.0
            for j in range(2, 6):
                a = sequential_tie_weight(omega, j, p.prefix(j - 1), 5)
                product *= a if p.labels[j - 1] == p.labels[j - 2] else 1 - a
            assert product == pytest.approx(prior.probability(p), abs=1e-12)


def test_uniform_mode():
    assert tie_weight('uniform', 7.0, 3, SetPartition([0, 1]), 4) == 0.5
    prior = uniform_prior(4)
    for p, prob in prior:
        assert prob == (pytest.approx(1 / 8) if is_order_consistent(p) else 0.0)


def test_tie_weight_errors():
    with pytest.raises(PartitionBoundsError):
        theta_tie_weight(1.0, 5, SetPartition([0, 0, 0, 0]))
    with pytest.raises(ArgumentError):
        theta_tie_weight(1.0, 3, SetPartition([0]))
    with pytest.raises(ArgumentError):
        theta_tie_weight(1.0, 4, SetPartition([0, 1, 0]))
    with pytest.raises(DomainError):
        theta_tie_weight(0.0, 2, SetPartition([0]))
    with pytest.raises(PartitionBoundsError):
        restricted_prior(1.0, 9)


def test_dp_eppf_normalization():
    for J in range(1, 7):
        for omega in (0.3, 1.0, 5.0):
            assert sum(dp_prior(omega, J).probabilities()) == pytest.approx(1.0, abs=1e-12)


def test_forward_sampler_matches_prior():
    rng = np.random.default_rng(7)
    omega, n = 1.3, 20000
    prior = restricted_prior(omega, 4)
    counts = {}
    for _ in range(n):
        p = sample_restricted_partition(omega, 4, rng)
        counts[p] = counts.get(p, 0) + 1
    for p, prob in prior:
        se = math.sqrt(prob * (1 - prob) / n)
        assert abs(counts.get(p, 0) / n - prob) <= 4 * se


def test_entropy():
    assert entropy(CI_COLUMN) == pytest.approx(0.501, abs=1e-3)
    assert entropy([1.0] + [0.0] * 14) == 0.0
    assert entropy([1 / 15] * 15) == pytest.approx(1.0)
    with pytest.raises(DomainError):
        entropy([0.5, 0.5], base=1)


def test_partition_strings():
    alphabet = ['C', 'G', 'M', 'S']
    p = SetPartition.from_string('{C}{G,M}{S}', alphabet)
    assert p.labels == (0, 1, 1, 2)
    assert p.to_string(alphabet) == '{C}{G,M}{S}'
    with pytest.raises(ArgumentError):
        SetPartition.from_string('{C}{G,M}', alphabet)


def test_binder_estimate():
    coclust = np.array([
        [1.0, 0.9, 0.1, 0.0],
        [0.9, 1.0, 0.2, 0.1],
        [0.1, 0.2, 1.0, 0.8],
        [0.0, 0.1, 0.8, 1.0],
    ])
    candidates = [[0, 0, 0, 0], [0, 0, 1, 1], [0, 1, 2, 3], [3, 3, 5, 5]]
    best = binder_estimate(coclust, candidates)
    assert list(best) == [0, 0, 1, 1]
    assert binder_loss(coclust, [0, 0, 1, 1]) == pytest.approx(0.1 + 0.2 + 0.1 + 0.1 + 0.2 + 0.0)
    with pytest.raises(ArgumentError):
        binder_estimate(coclust, [])


def test_binder_rejects_non_unit_diagonal():
    coclust = np.array([[0.8, 0.5], [0.5, 1.0]])
    with pytest.raises(ArgumentError):
        binder_estimate(coclust, [[0, 0], [0, 1]])


def test_binder_exhaustive_bell6():
    rng = np.random.default_rng(31)
    planted = np.array([0, 0, 1, 1, 1, 2])
    noise = rng.uniform(0.0, 0.25, size=(6, 6))
    coclust = np.where(planted[:, None] == planted[None, :], 0.8, 0.15) + (noise + noise.T) / 2
    coclust = np.clip(coclust, 0.0, 1.0)
    np.fill_diagonal(coclust, 1.0)

    candidates = enumerate_set_partitions(6)
    assert len(candidates) == bell_number(6) == 203
    losses = []
    for p in candidates:
        labels = p.labels
        loss = sum(abs(float(labels[i] == labels[k]) - coclust[i, k])
                   for i in range(6) for k in range(i + 1, 6))
        losses.append(loss)
    expected = candidates[int(np.argmin(losses))]
    assert SetPartition(binder_estimate(coclust, candidates).tolist()) == expected
    assert binder_loss(coclust, expected) == pytest.approx(min(losses))


def test_partition_distribution_tolerance():
    partitions = enumerate_set_partitions(2)
    PartitionDistribution([(partitions[0], 0.25), (partitions[1], 0.75)])
    with pytest.raises(ArgumentError):
        PartitionDistribution([(partitions[0], 0.25), (partitions[1], 0.75 + 1e-10)])
