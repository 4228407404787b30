"""Utility initialization module."""

from .helpers import (
    utc_timestamp,
    log_normalize,
    sample_log_categorical,
    systematic_resample,
    atomic_write_text,
    atomic_write_json,
    atomic_write_lines,
    to_jsonable,
    create_report
)
from .monitoring import get_process_metrics, default_worker_count

__all__ = [
    'utc_timestamp',
    'log_normalize',
    'sample_log_categorical',
    'systematic_resample',
    'atomic_write_text',
    'atomic_write_json',
    'atomic_write_lines',
    'to_jsonable',
    'create_report',
    'get_process_metrics',
    'default_worker_count'
]
