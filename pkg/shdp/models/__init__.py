"""Domain objects for the s-HDP model selection library."""

from .partition import SetPartition, PartitionDistribution
from .params import NormalInverseGammaParams, GaussianParams, GammaPrior
from .franchise import DishAtom, FranchiseState, SeatRecord
from .chain import ModelConfig, MCMCOptions, ChainState
from .dataset import Dataset, StandardizationRecord
from .summary import PosteriorSummary

__all__ = [
    'SetPartition', 'PartitionDistribution',
    'NormalInverseGammaParams', 'GaussianParams', 'GammaPrior',
    'DishAtom', 'FranchiseState', 'SeatRecord',
    'ModelConfig', 'MCMCOptions', 'ChainState',
    'Dataset', 'StandardizationRecord',
    'PosteriorSummary',
]
