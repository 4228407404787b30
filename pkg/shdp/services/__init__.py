"""Service layer initialization."""

from .data import simulate, load_csv, write_csv, standardize, destandardize
from .sampler import init_state, sweep, run_chain, working_data
from .summaries import summarize_response
from .checkpoint import CheckpointStore, SampleStream, read_records

__all__ = [
    'simulate', 'load_csv', 'write_csv', 'standardize', 'destandardize',
    'init_state', 'sweep', 'run_chain', 'working_data',
    'summarize_response',
    'CheckpointStore', 'SampleStream', 'read_records',
]
