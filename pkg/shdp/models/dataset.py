from typing import Dict, Any, List, Optional, Sequence

import numpy as np

from shdp.errors import DataValidationError


class StandardizationRecord:
    """Per-response pooled mean and standard deviation used to map summaries back."""

    def __init__(self, mean: Sequence[float], sd: Sequence[float]):
        self.mean = np.asarray(mean, dtype=float)
        self.sd = np.asarray(sd, dtype=float)
        if self.mean.shape != self.sd.shape:
            raise DataValidationError("Standardization mean and sd must have the same length")
        if np.any(self.sd <= 0):
            raise DataValidationError("Standardization sd must be positive")

    @classmethod
    def identity(cls, M: int) -> 'StandardizationRecord':
        return cls(np.zeros(M), np.ones(M))

    def is_identity(self) -> bool:
        return bool(np.all(self.mean == 0.0) and np.all(self.sd == 1.0))

    def to_original(self, values: Any, m: int) -> Any:
        return np.asarray(values, dtype=float) * self.sd[m] + self.mean[m]

    def to_standard(self, values: Any, m: int) -> Any:
        return (np.asarray(values, dtype=float) - self.mean[m]) / self.sd[m]

    def to_dict(self) -> Dict[str, Any]:
        return {'mean': self.mean.tolist(), 'sd': self.sd.tolist()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'StandardizationRecord':
        return cls(data['mean'], data['sd'])


class Dataset:
    """Measurements X[i, j, m] for patients i in ordered populations j on responses m.

    ``values[j]`` is an (n_j, M) array; populations are kept in severity order.
    """

    def __init__(self, values: Sequence[np.ndarray], population_labels: Optional[Sequence[str]] = None,
                 response_labels: Optional[Sequence[str]] = None,
                 patient_ids: Optional[Sequence[Sequence[str]]] = None,
                 standardization: Optional[StandardizationRecord] = None,
                 metadata: Optional[Dict[str, Any]] = None):
        self.values = [np.atleast_2d(np.asarray(v, dtype=float)) for v in values]
        if not self.values:
            raise DataValidationError("A dataset needs at least one population")
        M = self.values[0].shape[1]
        for j, block in enumerate(self.values):
            if block.shape[0] < 1:
                raise DataValidationError(f"Population {j} is empty")
            if block.shape[1] != M:
                raise DataValidationError(f"Population {j} has {block.shape[1]} responses, expected {M}")
            if not np.all(np.isfinite(block)):
                raise DataValidationError(f"Population {j} contains missing or non-finite values")
        self.population_labels = list(population_labels) if population_labels else \
            [str(j + 1) for j in range(len(self.values))]
        self.response_labels = list(response_labels) if response_labels else \
            [f"y{m + 1}" for m in range(M)]
        if len(self.population_labels) != len(self.values):
            raise DataValidationError("One label per population is required")
        if len(self.response_labels) != M:
            raise DataValidationError("One label per response is required")
        if patient_ids is None:
            # zero-padded so that sorting ids restores generation order
            patient_ids = [[f"{self.population_labels[j]}-{i + 1:0{len(str(block.shape[0]))}d}"
                            for i in range(block.shape[0])]
                           for j, block in enumerate(self.values)]
        self.patient_ids = [list(ids) for ids in patient_ids]
        self.standardization = standardization
        self.metadata = metadata or {}

    @property
    def J(self) -> int:
        return len(self.values)

    @property
    def M(self) -> int:
        return self.values[0].shape[1]

    @property
    def sizes(self) -> List[int]:
        return [block.shape[0] for block in self.values]

    @property
    def N(self) -> int:
        return sum(self.sizes)

    def response(self, m: int) -> List[np.ndarray]:
        """Per-population vectors of response m."""
        return [block[:, m] for block in self.values]

    def pooled(self, m: int) -> np.ndarray:
        return np.concatenate(self.response(m))

    def population_of_patient(self) -> np.ndarray:
        return np.repeat(np.arange(self.J), self.sizes)

    def equals(self, other: 'Dataset', atol: float = 0.0) -> bool:
        if self.sizes != other.sizes or self.M != other.M:
            return False
        if self.population_labels != other.population_labels or self.response_labels != other.response_labels:
            return False
        return all(np.allclose(a, b, rtol=0.0, atol=atol) for a, b in zip(self.values, other.values))

    def to_dict(self) -> Dict[str, Any]:
        return {
            'populations': self.population_labels,
            'responses': self.response_labels,
            'sizes': self.sizes,
            'patient_ids': self.patient_ids,
            'standardization': self.standardization.to_dict() if self.standardization else None,
        }
