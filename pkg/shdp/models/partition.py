from typing import Dict, Any, List, Optional, Sequence, Tuple, Iterator
import re

from shdp.errors import ArgumentError


class SetPartition:
    """Partition of J ordered populations stored as a restricted-growth label vector."""

    __slots__ = ('_labels',)

    def __init__(self, labels: Sequence[int]):
        if len(labels) == 0:
            raise ArgumentError("A partition needs at least one element")
        self._labels = self.canonicalize(labels)

    @staticmethod
    def canonicalize(labels: Sequence[int]) -> Tuple[int, ...]:
        """Relabel blocks so that first occurrences are 0, 1, 2, ..."""
        mapping: Dict[Any, int] = {}
        out = []
        for label in labels:
            if label not in mapping:
                mapping[label] = len(mapping)
            out.append(mapping[label])
        return tuple(out)

    @property
    def labels(self) -> Tuple[int, ...]:
        return self._labels

    @property
    def J(self) -> int:
        return len(self._labels)

    @property
    def n_blocks(self) -> int:
        return max(self._labels) + 1

    def blocks(self) -> List[List[int]]:
        """Blocks as lists of 0-based element indices, in order of first occurrence."""
        out: List[List[int]] = [[] for _ in range(self.n_blocks)]
        for idx, label in enumerate(self._labels):
            out[label].append(idx)
        return out

    def sizes(self) -> List[int]:
        return [len(block) for block in self.blocks()]

    def prefix(self, length: int) -> 'SetPartition':
        return SetPartition(self._labels[:length])

    def to_string(self, alphabet: Optional[Sequence[str]] = None) -> str:
        """Render as block sets in population order, e.g. ``{C}{G,M}{S}``."""
        names = self._alphabet(alphabet)
        return ''.join('{' + ','.join(names[i] for i in block) + '}' for block in self.blocks())

    @classmethod
    def from_string(cls, text: str, alphabet: Optional[Sequence[str]] = None) -> 'SetPartition':
        groups = re.findall(r'\{([^{}]*)\}', text)
        if not groups:
            raise ArgumentError(f"Cannot parse partition string: {text!r}")
        members = [[name.strip() for name in group.split(',') if name.strip()] for group in groups]
        J = sum(len(block) for block in members)
        names = list(alphabet) if alphabet is not None else [str(i + 1) for i in range(J)]
        index = {name: i for i, name in enumerate(names)}
        labels = [-1] * len(names)
        for b, block in enumerate(members):
            for name in block:
                if name not in index:
                    raise ArgumentError(f"Unknown element {name!r} in partition {text!r}")
                labels[index[name]] = b
        if any(label < 0 for label in labels):
            raise ArgumentError(f"Partition {text!r} does not cover all of {names}")
        return cls(labels)

    def _alphabet(self, alphabet: Optional[Sequence[str]]) -> List[str]:
        if alphabet is None:
            return [str(i + 1) for i in range(self.J)]
        if len(alphabet) != self.J:
            raise ArgumentError(f"Alphabet has {len(alphabet)} names for {self.J} populations")
        return [str(name) for name in alphabet]

    def to_dict(self) -> Dict[str, Any]:
        return {'labels': list(self._labels)}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'SetPartition':
        return cls(data['labels'])

    def __eq__(self, other: object) -> bool:
        return isinstance(other, SetPartition) and self._labels == other._labels

    def __lt__(self, other: 'SetPartition') -> bool:
        return self._labels < other._labels

    def __hash__(self) -> int:
        return hash(self._labels)

    def __len__(self) -> int:
        return len(self._labels)

    def __repr__(self) -> str:
        return f"SetPartition({self.to_string()})"


class PartitionDistribution:
    """Probability distribution over set partitions of a fixed number of populations."""

    TOLERANCE = 1e-12

    def __init__(self, entries: Sequence[Tuple[SetPartition, float]]):
        self.entries: List[Tuple[SetPartition, float]] = [(p, float(prob)) for p, prob in entries]
        total = sum(prob for _, prob in self.entries)
        if any(prob < 0 for _, prob in self.entries):
            raise ArgumentError("Partition probabilities must be non-negative")
        if abs(total - 1.0) > self.TOLERANCE:
            raise ArgumentError(f"Partition probabilities sum to {total}, expected 1")

    def probability(self, partition: SetPartition) -> float:
        for p, prob in self.entries:
            if p == partition:
                return prob
        return 0.0

    def probabilities(self) -> List[float]:
        return [prob for _, prob in self.entries]

    def map_partition(self) -> Tuple[SetPartition, float]:
        """Maximum a posteriori entry; ties resolved by enumeration order."""
        best = max(range(len(self.entries)), key=lambda i: (self.entries[i][1], -i))
        return self.entries[best]

    def as_mapping(self) -> Dict[SetPartition, float]:
        return dict(self.entries)

    def __iter__(self) -> Iterator[Tuple[SetPartition, float]]:
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def to_dict(self, alphabet: Optional[Sequence[str]] = None) -> Dict[str, Any]:
        return {
            'entries': [
                {'partition': p.to_string(alphabet), 'labels': list(p.labels), 'probability': prob}
                for p, prob in self.entries
            ]
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'PartitionDistribution':
        return cls([(SetPartition(e['labels']), e['probability']) for e in data.get('entries', [])])
