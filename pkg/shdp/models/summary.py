from typing import Dict, Any, List, Optional, Tuple

import numpy as np

from shdp.models.partition import PartitionDistribution


class PosteriorSummary:
    """Posterior summaries for one response variable."""

    def __init__(self, response: str, partition_probs: PartitionDistribution,
                 ordered_partition_probs: Dict[str, float], entropy: float,
                 coclust: np.ndarray, cluster_count_pmf: Dict[int, float],
                 theta_ci: List[Tuple[float, float, float]],
                 density: Optional[Dict[int, Tuple[np.ndarray, np.ndarray]]] = None,
                 binder: Optional[np.ndarray] = None,
                 ess: Optional[Dict[str, float]] = None, n_samples: int = 0):
        self.response = response
        self.partition_probs = partition_probs
        self.ordered_partition_probs = ordered_partition_probs
        self.entropy = float(entropy)
        self.coclust = coclust
        self.cluster_count_pmf = cluster_count_pmf
        self.theta_ci = theta_ci
        self.density = density or {}
        self.binder = binder
        self.ess = ess or {}
        self.n_samples = n_samples

    def map_partition(self):
        return self.partition_probs.map_partition()

    def to_dict(self, alphabet=None) -> Dict[str, Any]:
        map_partition, map_prob = self.map_partition()
        return {
            'response': self.response,
            'n_samples': self.n_samples,
            'map_partition': map_partition.to_string(alphabet),
            'map_probability': map_prob,
            'partition_probs': self.partition_probs.to_dict(alphabet)['entries'],
            'ordered_partition_probs': self.ordered_partition_probs,
            'entropy': self.entropy,
            'cluster_count_pmf': {str(k): v for k, v in sorted(self.cluster_count_pmf.items())},
            'theta_ci': [{'mean': mean, 'lower': lo, 'upper': hi} for mean, lo, hi in self.theta_ci],
            'binder_blocks': int(len(np.unique(self.binder))) if self.binder is not None else None,
            'ess': self.ess,
        }
