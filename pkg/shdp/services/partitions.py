"""Set-partition combinatorics, the DP partition law and the order-restricted location prior."""

from functools import lru_cache
from typing import List, Optional, Sequence, Union
import itertools
import logging
import math

import numpy as np
from scipy.special import gammaln

from shdp.errors import ArgumentError, DomainError, PartitionBoundsError
from shdp.models.partition import PartitionDistribution, SetPartition

logger = logging.getLogger(__name__)

MAX_POPULATIONS = 8
MODES = ('restricted', 'uniform', 'dp')

PatientLabels = Union[SetPartition, Sequence[int], np.ndarray]


def _check_omega(omega: float) -> float:
    omega = float(omega)
    if not omega > 0 or not math.isfinite(omega):
        raise DomainError(f"omega must be a positive finite number, got {omega}")
    return omega


def _check_J(J: int) -> int:
    if not isinstance(J, (int, np.integer)) or not 1 <= J <= MAX_POPULATIONS:
        raise PartitionBoundsError(f"J must be an integer in [1, {MAX_POPULATIONS}], got {J}")
    return int(J)


def bell_number(n: int) -> int:
    """Bell numbers via the Bell triangle."""
    row = [1]
    for _ in range(n - 1 if n > 0 else 0):
        nxt = [row[-1]]
        for value in row:
            nxt.append(nxt[-1] + value)
        row = nxt
    return row[-1]


@lru_cache(maxsize=None)
def _restricted_growth_strings(n: int) -> tuple:
    out = []

    def extend(prefix: List[int], top: int) -> None:
        if len(prefix) == n:
            out.append(tuple(prefix))
            return
        for label in range(top + 2):
            prefix.append(label)
            extend(prefix, max(top, label))
            prefix.pop()

    extend([0], 0)
    return tuple(out)


def enumerate_set_partitions(J: int) -> List[SetPartition]:
    """All Bell(J) partitions of J ordered elements in lexicographic label order."""
    J = _check_J(J)
    return [SetPartition(labels) for labels in _restricted_growth_strings(J)]


def is_order_consistent(p: SetPartition) -> bool:
    """True iff every block is a run of consecutive populations."""
    labels = p.labels
    return all(labels[j] - labels[j - 1] in (0, 1) for j in range(1, len(labels)))


def enumerate_contiguous_partitions(J: int) -> List[SetPartition]:
    """The 2^(J-1) order-consistent partitions, one per choice of cut points."""
    J = _check_J(J)
    out = []
    for cuts in itertools.product((0, 1), repeat=J - 1):
        out.append(SetPartition(np.concatenate([[0], np.cumsum(cuts)]).astype(int)))
    return sorted(out)


def dp_eppf_log(omega: float, p: SetPartition) -> float:
    """log[ omega^k / (omega)_J * prod (n_i - 1)! ]."""
    omega = _check_omega(omega)
    sizes = np.asarray(p.sizes(), dtype=float)
    return float(len(sizes) * math.log(omega) + gammaln(omega) - gammaln(omega + p.J)
                 + np.sum(gammaln(sizes)))


def restricted_weight_log(omega: float, p: SetPartition) -> float:
    """Unnormalized log weight omega^(k-1) prod (n_i - 1)! of a contiguous partition."""
    omega = _check_omega(omega)
    sizes = np.asarray(p.sizes(), dtype=float)
    return float((len(sizes) - 1) * math.log(omega) + np.sum(gammaln(sizes)))


def restricted_normalizer(omega: float, J: int) -> float:
    """Sum of contiguous-partition weights; equals (omega+2)(omega^2+omega+3) when J = 4."""
    return math.exp(restricted_normalizer_log(omega, J))


def restricted_normalizer_log(omega: float, J: int) -> float:
    omega = _check_omega(omega)
    logs = [restricted_weight_log(omega, p) for p in enumerate_contiguous_partitions(J)]
    return float(np.logaddexp.reduce(logs))


def restricted_prior(omega: float, J: int) -> PartitionDistribution:
    """DP partition law conditioned on order consistency, over all Bell(J) partitions."""
    omega = _check_omega(omega)
    J = _check_J(J)
    log_z = restricted_normalizer_log(omega, J)
    entries = []
    for p in enumerate_set_partitions(J):
        if is_order_consistent(p):
            entries.append((p, math.exp(restricted_weight_log(omega, p) - log_z)))
        else:
            entries.append((p, 0.0))
    return PartitionDistribution(entries)


def uniform_prior(J: int) -> PartitionDistribution:
    """Equal mass 2^-(J-1) on every contiguous partition."""
    J = _check_J(J)
    mass = 1.0 / 2 ** (J - 1)
    return PartitionDistribution([(p, mass if is_order_consistent(p) else 0.0)
                                  for p in enumerate_set_partitions(J)])


def dp_prior(omega: float, J: int) -> PartitionDistribution:
    omega = _check_omega(omega)
    return PartitionDistribution([(p, math.exp(dp_eppf_log(omega, p))) for p in enumerate_set_partitions(J)])


def location_prior(mode: str, omega: float, J: int) -> PartitionDistribution:
    if mode == 'restricted':
        return restricted_prior(omega, J)
    if mode == 'uniform':
        return uniform_prior(J)
    if mode == 'dp':
        return dp_prior(omega, J)
    raise ArgumentError(f"Unknown prior mode: {mode}. Must be one of {list(MODES)}")


def _check_prefix(j: int, prefix: SetPartition) -> None:
    if len(prefix) != j - 1:
        raise ArgumentError(f"Prefix for population {j} must cover {j - 1} populations, got {len(prefix)}")
    if not is_order_consistent(prefix):
        raise ArgumentError(f"Prefix {prefix.to_string()} is not order consistent")


def theta_tie_weight(omega: float, j: int, prefix: SetPartition) -> float:
    """Prior probability that theta_j joins theta_(j-1) given theta_1..theta_(j-1), for J = 4.

    ``j`` is the 1-based population index (2, 3 or 4).
    """
    omega = _check_omega(omega)
    if j not in (2, 3, 4):
        raise PartitionBoundsError(f"Closed-form tie weights exist for j in 2..4 only, got {j}")
    _check_prefix(j, prefix)
    w = omega
    if j == 2:
        return (w**2 + 3 * w + 6) / ((w + 2) * (w**2 + w + 3))
    labels = prefix.labels
    if j == 3:
        if labels[1] == labels[0]:
            return (2 * w + 6) / (w**2 + 3 * w + 6)
        return (w + 2) / (w**2 + 2 * w + 2)
    if labels[2] == labels[1] == labels[0]:
        return 3 / (w + 3)
    if labels[2] == labels[1]:
        return 2 / (w + 2)
    return 1 / (w + 1)


def sequential_tie_weight(omega: float, j: int, prefix: SetPartition, J: int) -> float:
    """Tie probability for any J <= 8, by summing contiguous completions of the prefix."""
    omega = _check_omega(omega)
    J = _check_J(J)
    if not 2 <= j <= J:
        raise PartitionBoundsError(f"Population index must be in 2..{J}, got {j}")
    _check_prefix(j, prefix)
    return math.exp(_tie_weight_log(omega, J, prefix.labels))


@lru_cache(maxsize=4096)
def _tie_weight_log(omega: float, J: int, prefix: tuple) -> float:
    tie, new = [], []
    n = len(prefix)
    for p in enumerate_contiguous_partitions(J):
        if p.labels[:n] != prefix:
            continue
        weight = restricted_weight_log(omega, p)
        (tie if p.labels[n] == p.labels[n - 1] else new).append(weight)
    log_tie = np.logaddexp.reduce(tie)
    return float(log_tie - np.logaddexp.reduce(tie + new))


def tie_weight(mode: str, omega: float, j: int, prefix: SetPartition, J: int) -> float:
    """Tie probability used by the location sampler in the ordered modes."""
    if mode == 'uniform':
        return 0.5
    if J == 4:
        return theta_tie_weight(omega, j, prefix)
    return sequential_tie_weight(omega, j, prefix, J)


def sample_restricted_partition(omega: float, J: int, rng: np.random.Generator,
                                mode: str = 'restricted') -> SetPartition:
    """Forward draw of a contiguous partition from the tie weights."""
    labels = [0]
    for j in range(2, J + 1):
        a = tie_weight(mode, omega, j, SetPartition(labels), J)
        labels.append(labels[-1] if rng.random() < a else labels[-1] + 1)
    return SetPartition(labels)


def entropy(dist: Union[PartitionDistribution, Sequence[float]], base: Optional[float] = None) -> float:
    """Shannon entropy with 0 log 0 = 0; base defaults to the number of outcomes."""
    probs = np.asarray(dist.probabilities() if isinstance(dist, PartitionDistribution) else dist, dtype=float)
    if base is None:
        base = len(probs)
    if base <= 0 or base == 1:
        raise DomainError(f"Entropy base must be positive and different from 1, got {base}")
    nonzero = probs[probs > 0]
    value = float(-np.sum(nonzero * np.log(nonzero)) / math.log(base))
    return max(value, 0.0)


def _labels_array(candidate: PatientLabels) -> np.ndarray:
    if isinstance(candidate, SetPartition):
        return np.asarray(candidate.labels, dtype=np.int64)
    return np.asarray(candidate, dtype=np.int64)


def binder_loss(coclust: np.ndarray, labels: PatientLabels) -> float:
    """Sum over pairs i < i' of |1[same block] - coclust[i, i']|."""
    labels = _labels_array(labels)
    coclust = np.asarray(coclust, dtype=float)
    same = (labels[:, None] == labels[None, :]).astype(float)
    upper = np.triu_indices(len(labels), k=1)
    return float(np.sum(np.abs(same[upper] - coclust[upper])))


def binder_estimate(coclust: np.ndarray, candidates: Sequence[PatientLabels]) -> np.ndarray:
    """The candidate patient partition with the smallest Binder loss."""
    if len(candidates) == 0:
        raise ArgumentError("binder_estimate needs at least one candidate partition")
    coclust = np.asarray(coclust, dtype=float)
    if coclust.ndim != 2 or coclust.shape[0] != coclust.shape[1]:
        raise ArgumentError("Co-clustering matrix must be square")
    if not np.allclose(coclust, coclust.T):
        raise ArgumentError("Co-clustering matrix must be symmetric")
    if not np.allclose(np.diag(coclust), 1.0):
        raise ArgumentError("Co-clustering matrix must have a unit diagonal")
    best, best_loss = None, math.inf
    for candidate in candidates:
        labels = _labels_array(candidate)
        if len(labels) != coclust.shape[0]:
            raise ArgumentError(f"Candidate covers {len(labels)} items, matrix has {coclust.shape[0]}")
        loss = binder_loss(coclust, labels)
        if loss < best_loss:
            best, best_loss = labels, loss
    return np.asarray(SetPartition(best).labels, dtype=np.int64)


@lru_cache(maxsize=None)
def restricted_normalizer_coefficients(J: int) -> tuple:
    """Coefficients c_k with sum_k c_k omega^k equal to the contiguous-partition normalizer."""
    J = _check_J(J)
    coeffs = [0] * J
    for p in enumerate_contiguous_partitions(J):
        coeffs[p.n_blocks - 1] += math.prod(math.factorial(n - 1) for n in p.sizes())
    return tuple(coeffs)


def restricted_normalizer_log_array(omega: np.ndarray, J: int) -> np.ndarray:
    """Vectorized log normalizer over an array of omega values."""
    coeffs = np.asarray(restricted_normalizer_coefficients(J), dtype=float)
    return np.log(np.polyval(coeffs[::-1], np.asarray(omega, dtype=float)))
