"""Utility functions shared by the services and commands."""

import json
import os
import tempfile
from datetime import datetime, timezone
from typing import Optional, Dict, Any, Iterable

import numpy as np
from scipy.special import logsumexp


def utc_timestamp() -> str:
    """ISO-8601 timestamp in UTC."""
    return datetime.now(timezone.utc).isoformat()


def log_normalize(log_weights: np.ndarray) -> np.ndarray:
    """Turn unnormalized log-weights into probabilities (max-subtracted)."""
    log_weights = np.asarray(log_weights, dtype=float)
    return np.exp(log_weights - logsumexp(log_weights))


def sample_log_categorical(log_weights: np.ndarray, rng: np.random.Generator) -> int:
    """Draw an index with probability proportional to exp(log_weights)."""
    log_weights = np.asarray(log_weights, dtype=float)
    top = np.max(log_weights)
    if not np.isfinite(top):
        raise FloatingPointError("All categorical log-weights are -inf or non-finite")
    weights = np.exp(log_weights - top)
    cumulative = np.cumsum(weights)
    u = rng.random() * cumulative[-1]
    return int(min(np.searchsorted(cumulative, u, side='right'), len(weights) - 1))


def systematic_resample(log_weights: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
    """Indices of a systematic resample: one uniform offset, ``size`` evenly spaced points."""
    probs = log_normalize(log_weights)
    if not np.all(np.isfinite(probs)):
        raise FloatingPointError("Resampling weights are not finite")
    positions = (rng.random() + np.arange(size)) / size
    cumulative = np.cumsum(probs)
    cumulative[-1] = 1.0
    return np.searchsorted(cumulative, positions, side='right').clip(max=len(probs) - 1)


def atomic_write_text(path: str, text: str) -> None:
    """Write to a temporary sibling and rename over the target."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix='.' + os.path.basename(path), suffix='.tmp')
    try:
        with os.fdopen(fd, 'w', encoding='utf-8') as handle:
            handle.write(text)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise


def atomic_write_json(path: str, payload: Any) -> None:
    atomic_write_text(path, json.dumps(payload, indent=2, default=to_jsonable))


def atomic_write_lines(path: str, records: Iterable[Dict[str, Any]]) -> None:
    atomic_write_text(path, ''.join(json.dumps(r, default=to_jsonable) + '\n' for r in records))


def to_jsonable(value: Any) -> Any:
    """json.dumps ``default`` hook for numpy scalars and arrays."""
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def create_report(success: bool, data: Any = None, error: Optional[str] = None,
                  message: Optional[str] = None) -> Dict[str, Any]:
    """Create the standard report envelope used by command outputs."""
    response: Dict[str, Any] = {
        'success': success,
        'timestamp': utc_timestamp(),
    }

    if data is not None:
        response['data'] = data

    if message:
        response['message'] = message

    if error:
        response['error'] = error

    return response
