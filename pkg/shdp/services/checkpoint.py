"""Checkpoint and sample-stream persistence for chains.

Checkpoints are versioned JSON documents holding the full ChainState and the
bit-generator state, written atomically. Sample streams are NDJSON files kept
under a ``.part`` name while a chain is running and renamed when it finishes.
"""

import json
import logging
import os
from typing import Dict, Any, Iterator, List, Optional, Tuple

import numpy as np

from shdp.errors import CheckpointError
from shdp.models.chain import ChainState
from shdp.utils.helpers import atomic_write_json, atomic_write_lines, atomic_write_text, to_jsonable, utc_timestamp

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = 'shdp-checkpoint'
CHECKPOINT_VERSION = 1


def new_generator(state: Optional[Dict[str, Any]] = None, seed: Any = None) -> np.random.Generator:
    rng = np.random.Generator(np.random.PCG64(seed))
    if state is not None:
        rng.bit_generator.state = state
    return rng


class CheckpointStore:

    def __init__(self, directory: str):
        self.directory = directory

    def checkpoint_path(self, chain: int) -> str:
        return os.path.join(self.directory, f"chain_{chain}.ckpt.json")

    def save(self, state: ChainState, rng: np.random.Generator) -> str:
        path = self.checkpoint_path(state.chain)
        payload = {
            'format': CHECKPOINT_FORMAT,
            'version': CHECKPOINT_VERSION,
            'chain': state.chain,
            'iteration': state.iteration,
            'written_at': utc_timestamp(),
            'state': state.to_dict(),
            'rng': rng.bit_generator.state,
        }
        try:
            atomic_write_json(path, payload)
        except OSError as e:
            raise CheckpointError(f"Failed to write checkpoint {path}: {str(e)}",
                                  chain=state.chain, iteration=state.iteration)
        logger.info(f"Checkpoint written: chain {state.chain} at iteration {state.iteration}")
        return path

    def exists(self, chain: int) -> bool:
        return os.path.exists(self.checkpoint_path(chain))

    def load(self, chain: int) -> Tuple[ChainState, np.random.Generator]:
        path = self.checkpoint_path(chain)
        try:
            with open(path, 'r', encoding='utf-8') as handle:
                payload = json.load(handle)
        except (OSError, ValueError) as e:
            raise CheckpointError(f"Failed to read checkpoint {path}: {str(e)}", chain=chain)
        if payload.get('format') != CHECKPOINT_FORMAT or payload.get('version') != CHECKPOINT_VERSION:
            raise CheckpointError(f"{path} is not a version {CHECKPOINT_VERSION} checkpoint", chain=chain)
        state = ChainState.from_dict(payload['state'])
        rng = new_generator(payload['rng'])
        logger.info(f"Checkpoint loaded: chain {chain} at iteration {state.iteration}")
        return state, rng


class SampleStream:
    """NDJSON sample records of one chain."""

    def __init__(self, directory: str, chain: int):
        self.chain = chain
        self.path = os.path.join(directory, f"chain_{chain}.ndjson")
        self.partial_path = self.path + '.part'
        self._handle = None

    def open(self, resume_at: Optional[int] = None) -> 'SampleStream':
        """Start writing; when resuming, keep only records up to ``resume_at``."""
        os.makedirs(os.path.dirname(os.path.abspath(self.path)), exist_ok=True)
        if resume_at is None:
            atomic_write_text(self.partial_path, '')
        else:
            source = self.partial_path if os.path.exists(self.partial_path) else self.path
            kept = [r for r in read_records(source) if r['iter'] <= resume_at] if os.path.exists(source) else []
            atomic_write_lines(self.partial_path, kept)
            if source == self.path:
                os.unlink(self.path)
        try:
            self._handle = open(self.partial_path, 'a', encoding='utf-8')
        except OSError as e:
            raise CheckpointError(f"Cannot open sample stream {self.partial_path}: {str(e)}",
                                  chain=self.chain, iteration=resume_at)
        return self

    def write(self, records: List[Dict[str, Any]]) -> None:
        try:
            for record in records:
                self._handle.write(json.dumps(record, default=to_jsonable) + '\n')
        except OSError as e:
            iteration = records[0]['iter'] if records else None
            raise CheckpointError(f"Failed to append to {self.partial_path}: {str(e)}",
                                  chain=self.chain, iteration=iteration)

    def flush(self) -> None:
        if self._handle is not None:
            self._handle.flush()
            os.fsync(self._handle.fileno())

    def finish(self) -> str:
        self.close()
        os.replace(self.partial_path, self.path)
        return self.path

    def close(self) -> None:
        if self._handle is not None:
            self._handle.close()
            self._handle = None


def read_records(path: str) -> Iterator[Dict[str, Any]]:
    """Iterate the records of an NDJSON stream, skipping a torn final line."""
    try:
        with open(path, 'r', encoding='utf-8') as handle:
            for number, line in enumerate(handle, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    yield json.loads(line)
                except ValueError:
                    logger.warning(f"Ignoring unreadable line {number} in {path}")
    except OSError as e:
        raise CheckpointError(f"Failed to read sample stream {path}: {str(e)}")
