"""Posterior summaries computed from emitted sample records.

Every function takes the records of one response (dicts as written by the sampler)
and only aggregates them, so chains can be summarized separately and pooled.
"""

from collections import Counter
from typing import Dict, Any, Iterable, List, Optional, Sequence, Tuple
import logging

import numpy as np
from scipy.cluster.hierarchy import average, fcluster, leaves_list
from scipy.spatial.distance import squareform

from shdp.errors import ArgumentError, DomainError
from shdp.models.dataset import Dataset, StandardizationRecord
from shdp.models.params import NormalInverseGammaParams
from shdp.models.partition import PartitionDistribution, SetPartition
from shdp.models.summary import PosteriorSummary
from shdp.services.partitions import binder_estimate, entropy, enumerate_set_partitions
from shdp.services.symmetric_hdp import predictive_density

logger = logging.getLogger(__name__)

GRID_POINTS = 512
GRID_SPREAD = 3.0
BINDER_THRESHOLDS = (0.3, 0.5, 0.7)


def records_for(records: Iterable[Dict[str, Any]], m: int) -> List[Dict[str, Any]]:
    return [r for r in records if r['m'] == m]


def pool_chains(chains: Sequence[Sequence[Dict[str, Any]]], burn_in: int = 0) -> List[Dict[str, Any]]:
    """Concatenate chains after discarding iterations <= burn_in in each."""
    pooled = []
    for records in chains:
        pooled.extend(r for r in records if r['iter'] > burn_in)
    return pooled


def _require(records: Sequence[Dict[str, Any]]) -> None:
    if not records:
        raise ArgumentError("At least one sample record is required")


def tabulate_partitions(records: Sequence[Dict[str, Any]], J: Optional[int] = None) -> PartitionDistribution:
    """Empirical frequencies over all partitions of the populations, zero-filled."""
    _require(records)
    J = J or len(records[0]['partition'])
    counts = Counter(SetPartition(r['partition']) for r in records)
    n = float(len(records))
    return PartitionDistribution([(p, counts.get(p, 0) / n) for p in enumerate_set_partitions(J)])


def ordered_key(partition: SetPartition, theta: Sequence[float],
                alphabet: Optional[Sequence[str]] = None) -> str:
    """Blocks listed by increasing location, e.g. ``{S}<{C,G,M}``; ties keep block order."""
    names = list(alphabet) if alphabet is not None else [str(i + 1) for i in range(partition.J)]
    blocks = partition.blocks()
    values = [theta[block[0]] for block in blocks]
    order = sorted(range(len(blocks)), key=lambda b: (values[b], b))
    return '<'.join('{' + ','.join(names[i] for i in blocks[b]) + '}' for b in order)


def tabulate_ordered_partitions(records: Sequence[Dict[str, Any]],
                                alphabet: Optional[Sequence[str]] = None) -> Dict[str, float]:
    _require(records)
    counts: Counter = Counter()
    for r in records:
        counts[ordered_key(SetPartition(r['partition']), r['theta'], alphabet)] += 1
    n = float(len(records))
    return {key: c / n for key, c in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))}


def _dish_keys(record: Dict[str, Any], signed: bool) -> np.ndarray:
    dishes = np.asarray(record['dish_label_per_patient'], dtype=np.int64)
    if not signed:
        return dishes
    signs = np.asarray(record['sign'], dtype=np.int64)
    return 2 * dishes + (signs > 0)


def coclustering_matrix(records: Sequence[Dict[str, Any]], signed: bool = False) -> np.ndarray:
    """Fraction of samples in which two patients share a dish pair (or a signed dish)."""
    _require(records)
    N = len(records[0]['dish_label_per_patient'])
    total = np.zeros((N, N))
    for r in records:
        keys = _dish_keys(r, signed)
        total += keys[:, None] == keys[None, :]
    out = total / len(records)
    np.fill_diagonal(out, 1.0)
    return out


def cluster_count_posterior(records: Sequence[Dict[str, Any]], signed: bool = False) -> Dict[int, float]:
    """Posterior of the number of dish pairs, or of occupied signed dishes when ``signed``."""
    _require(records)
    if signed:
        counts = Counter(len(np.unique(_dish_keys(r, True))) for r in records)
    else:
        counts = Counter(int(r['n_dishes']) for r in records)
    n = float(len(records))
    return {k: c / n for k, c in sorted(counts.items())}


def theta_credible_intervals(records: Sequence[Dict[str, Any]], level: float = 0.95,
                             standardization: Optional[StandardizationRecord] = None,
                             m: int = 0) -> List[Tuple[float, float, float]]:
    """Equal-tailed intervals of each population's location on the original scale."""
    if not 0.0 < level < 1.0:
        raise DomainError(f"Credible level must lie in (0, 1), got {level}")
    _require(records)
    draws = np.array([r['theta'] for r in records], dtype=float)
    if standardization is not None:
        draws = standardization.to_original(draws, m)
    tail = (1.0 - level) / 2.0
    lower = np.quantile(draws, tail, axis=0)
    upper = np.quantile(draws, 1.0 - tail, axis=0)
    mean = draws.mean(axis=0)
    return [(float(a), float(b), float(c)) for a, b, c in zip(mean, lower, upper)]


def default_grid(data: Dataset, m: int, points: int = GRID_POINTS) -> np.ndarray:
    """Data range widened by three pooled standard deviations, on the data's own scale."""
    pooled = data.pooled(m)
    spread = GRID_SPREAD * float(np.std(pooled))
    if spread == 0.0:
        spread = GRID_SPREAD
    return np.linspace(float(pooled.min()) - spread, float(pooled.max()) + spread, points)


def record_snapshot(record: Dict[str, Any]) -> Dict[str, Any]:
    mixture = record['mixture']
    return {'tables': mixture['tables'], 'menu': mixture['menu'],
            'gamma': record['gamma'], 'alpha': record['alpha']}


def density_estimate(records: Sequence[Dict[str, Any]], j: int, grid: np.ndarray,
                     prior: NormalInverseGammaParams,
                     standardization: Optional[StandardizationRecord] = None,
                     m: int = 0, max_states: Optional[int] = None) -> np.ndarray:
    """Posterior predictive density of a new observation in population ``j``.

    Averages, over the retained states, the franchise predictive of a new error shifted
    by that state's location. ``grid`` is on the original scale when a standardization
    record is given; ``max_states`` evenly subsamples long streams.
    """
    _require(records)
    grid = np.asarray(grid, dtype=float)
    if not np.all(np.isfinite(grid)):
        raise ArgumentError("Density grid must be finite")
    if max_states is not None and len(records) > max_states:
        picks = np.unique(np.linspace(0, len(records) - 1, max_states).round().astype(int))
        records = [records[i] for i in picks]

    scale = 1.0
    working = grid
    if standardization is not None:
        working = standardization.to_standard(grid, m)
        scale = float(standardization.sd[m])

    total = np.zeros_like(working)
    for r in records:
        total += predictive_density(record_snapshot(r), j, working - float(r['theta'][j]), prior)
    return total / (len(records) * scale)


def average_linkage_order(coclust: np.ndarray) -> np.ndarray:
    """Leaf order of an average-linkage tree on 1 - coclust, grouping similar patients."""
    coclust = np.asarray(coclust, dtype=float)
    if coclust.shape[0] < 2:
        return np.arange(coclust.shape[0])
    return leaves_list(_linkage(coclust))


def _linkage(coclust: np.ndarray) -> np.ndarray:
    distance = np.clip(1.0 - coclust, 0.0, None)
    np.fill_diagonal(distance, 0.0)
    return average(squareform(distance, checks=False))


def binder_candidates(records: Sequence[Dict[str, Any]], coclust: np.ndarray,
                      thresholds: Sequence[float] = BINDER_THRESHOLDS, signed: bool = False) -> List[np.ndarray]:
    """Visited patient partitions plus average-linkage cuts at the given co-clustering levels."""
    seen = {}
    for r in records:
        labels = SetPartition(_dish_keys(r, signed).tolist()).labels
        seen.setdefault(labels, None)
    candidates = [np.array(labels, dtype=np.int64) for labels in seen]
    if coclust.shape[0] >= 2:
        tree = _linkage(coclust)
        for t in thresholds:
            cut = fcluster(tree, t=1.0 - t, criterion='distance')
            candidates.append(np.array(SetPartition(cut.tolist()).labels, dtype=np.int64))
    return candidates


def effective_sample_size(draws: Sequence[float]) -> float:
    """Initial positive sequence estimator on the autocorrelations of one chain."""
    x = np.asarray(draws, dtype=float)
    n = len(x)
    if n < 4:
        return float(n)
    x = x - x.mean()
    variance = float(np.dot(x, x)) / n
    if variance == 0.0:
        return float(n)
    size = 1 << (2 * n - 1).bit_length()
    spectrum = np.fft.rfft(x, size)
    acf = np.fft.irfft(spectrum * np.conj(spectrum), size)[:n] / (n * variance)
    tau = -1.0
    for k in range(0, n - 1, 2):
        pair = acf[k] + acf[k + 1]
        if pair <= 0:
            break
        tau += 2.0 * pair
    return float(n / max(tau, 1.0 / n))


def chain_ess(chains: Sequence[Sequence[Dict[str, Any]]], J: int) -> Dict[str, float]:
    """ESS of omega and every location, summed over chains."""
    out = {'omega': 0.0}
    out.update({f"theta_{j + 1}": 0.0 for j in range(J)})
    for records in chains:
        if not records:
            continue
        out['omega'] += effective_sample_size([r['omega'] for r in records])
        theta = np.array([r['theta'] for r in records], dtype=float)
        for j in range(J):
            out[f"theta_{j + 1}"] += effective_sample_size(theta[:, j])
    return out


def summarize_response(chains: Sequence[Sequence[Dict[str, Any]]], m: int, response: str,
                       prior: NormalInverseGammaParams, data: Optional[Dataset] = None,
                       standardization: Optional[StandardizationRecord] = None,
                       alphabet: Optional[Sequence[str]] = None, level: float = 0.95,
                       signed: bool = False, grid_points: int = GRID_POINTS,
                       max_density_states: Optional[int] = 1000) -> PosteriorSummary:
    """All summaries of response ``m`` from per-chain record lists (already past burn-in)."""
    per_chain = [records_for(records, m) for records in chains]
    records = [r for chain in per_chain for r in chain]
    _require(records)
    J = len(records[0]['partition'])

    partition_probs = tabulate_partitions(records, J)
    coclust = coclustering_matrix(records, signed)
    binder = binder_estimate(coclust, binder_candidates(records, coclust, signed=signed))

    density = {}
    if data is not None:
        grid = default_grid(data, m, grid_points)
        for j in range(J):
            density[j] = (grid, density_estimate(records, j, grid, prior, standardization, m,
                                                 max_states=max_density_states))

    logger.info(f"Summarized response {response}: {len(records)} samples from {len(per_chain)} chain(s)")
    return PosteriorSummary(
        response=response,
        partition_probs=partition_probs,
        ordered_partition_probs=tabulate_ordered_partitions(records, alphabet),
        entropy=entropy(partition_probs),
        coclust=coclust,
        cluster_count_pmf=cluster_count_posterior(records, signed),
        theta_ci=theta_credible_intervals(records, level, standardization, m),
        density=density,
        binder=binder,
        ess=chain_ess(per_chain, J),
        n_samples=len(records),
    )
