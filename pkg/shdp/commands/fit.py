from concurrent.futures import ProcessPoolExecutor
from typing import Dict, Any, List, Optional
import argparse
import json
import logging
import os

import numpy as np

from shdp.commands.schemas import load_command_spec, resolve
from shdp.errors import CheckpointError
from shdp.models.chain import MCMCOptions, ModelConfig
from shdp.models.dataset import Dataset
from shdp.services.checkpoint import CheckpointStore, SampleStream, new_generator
from shdp.services.data import load_csv
from shdp.services.sampler import run_chain, working_data
from shdp.utils.helpers import atomic_write_json, utc_timestamp
from shdp.utils.monitoring import default_worker_count, get_process_metrics

logger = logging.getLogger(__name__)

MANIFEST = 'run.json'


def register(subparsers) -> None:
    parser = subparsers.add_parser('fit', help='Run the Gibbs sampler and write sample streams')
    parser.add_argument('-i', '--input', required=True, help='Long-format CSV dataset')
    parser.add_argument('--config', default=None, help='JSON or TOML configuration file')
    parser.add_argument('--seed', type=int, default=None, help='Random seed (required)')
    parser.add_argument('--chains', type=int, default=1, help='Number of independent chains')
    parser.add_argument('--workers', type=int, default=None, help='Parallel chain workers (default: chains)')
    parser.add_argument('--iterations', type=int, default=None)
    parser.add_argument('--burn-in', type=int, default=None)
    parser.add_argument('--thin', type=int, default=None)
    parser.add_argument('--prior-mode', choices=ModelConfig.VALID_MODES, default=None)
    parser.add_argument('--tie-gamma', action='store_true', default=None,
                        help='Share gamma across the populations of a response')
    parser.add_argument('--severity-order', default=None,
                        help='Population labels in severity order, comma separated')
    parser.add_argument('--out-dir', default='run', help='Directory for streams, checkpoints and run.json')
    parser.add_argument('--resume', action='store_true', help='Continue from the checkpoints in --out-dir')
    parser.set_defaults(handler=cmd_fit)


def overrides_from_args(args: argparse.Namespace) -> Dict[str, Any]:
    return {
        'mcmc.iterations': args.iterations,
        'mcmc.burn_in': args.burn_in,
        'mcmc.thin': args.thin,
        'prior_mode': args.prior_mode,
        'tie_gamma': args.tie_gamma,
        'severity_order': args.severity_order.split(',') if args.severity_order else None,
    }


def chain_seeds(seed: int, chains: int) -> List[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(chains)


def run_single_chain(data: Dataset, config: ModelConfig, options: MCMCOptions, chain: int,
                     seed_sequence: np.random.SeedSequence, out_dir: str, resume: bool = False) -> Dict[str, Any]:
    """Run one chain to completion, streaming records and checkpointing along the way."""
    store = CheckpointStore(out_dir)
    stream = SampleStream(out_dir, chain)
    state = None
    if resume and store.exists(chain):
        state, rng = store.load(chain)
        stream.open(resume_at=state.iteration)
    else:
        if resume:
            logger.warning(f"No checkpoint for chain {chain}; starting it from scratch")
        rng = new_generator(seed=seed_sequence)
        stream.open()

    def on_checkpoint(current, generator) -> None:
        stream.flush()
        store.save(current, generator)

    emitted = 0
    try:
        for records in run_chain(data, config, options, rng, chain=chain, state=state,
                                 on_checkpoint=on_checkpoint):
            stream.write(records)
            emitted += 1
    except BaseException:
        stream.close()
        raise
    path = stream.finish()
    return {'chain': chain, 'stream': os.path.basename(path), 'emitted_this_run': emitted,
            'resumed_from': state.iteration if resume and state is not None else None}


def _chain_task(payload: Dict[str, Any]) -> Dict[str, Any]:
    return run_single_chain(**payload)


def write_manifest(out_dir: str, manifest: Dict[str, Any]) -> None:
    atomic_write_json(os.path.join(out_dir, MANIFEST), manifest)


def read_manifest(run_dir: str) -> Dict[str, Any]:
    path = os.path.join(run_dir, MANIFEST)
    try:
        with open(path, 'r', encoding='utf-8') as handle:
            return json.load(handle)
    except (OSError, ValueError) as e:
        raise CheckpointError(f"Cannot read run manifest {path}: {str(e)}")


def cmd_fit(args: argparse.Namespace) -> int:
    spec = load_command_spec({'subcommand': 'fit', 'config': args.config, 'input': args.input,
                              'out_dir': args.out_dir, 'seed': args.seed, 'chains': args.chains})
    config, options, settings = resolve(spec['config'], overrides_from_args(args), spec['seed'])
    data = load_csv(spec['input'], settings['schema'], settings['severity_order'], settings['response_order'])
    config.check_responses(data.M)
    work = working_data(data, config)

    out_dir = spec['out_dir']
    os.makedirs(out_dir, exist_ok=True)
    seeds = chain_seeds(spec['seed'], spec['chains'])
    manifest = {
        'created': utc_timestamp(),
        'status': 'running',
        'input': os.path.abspath(spec['input']),
        'dataset': work.to_dict(),
        'settings': settings,
        'config': config.to_dict(),
        'mcmc': options.to_dict(),
        'seed': spec['seed'],
        'chains': spec['chains'],
        'chain_seeds': [{'entropy': str(s.entropy), 'spawn_key': list(s.spawn_key)} for s in seeds],
    }
    if args.resume:
        manifest['resumed'] = utc_timestamp()
    write_manifest(out_dir, manifest)

    payloads = [dict(data=work, config=config, options=options, chain=c, seed_sequence=seeds[c],
                     out_dir=out_dir, resume=args.resume) for c in range(spec['chains'])]
    workers = default_worker_count(args.workers or spec['chains'])
    logger.info(f"Fitting {spec['chains']} chain(s) with {workers} worker(s) into {out_dir}")
    if workers == 1 or spec['chains'] == 1:
        results = [_chain_task(p) for p in payloads]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_chain_task, payloads))

    manifest.update({
        'status': 'complete',
        'finished': utc_timestamp(),
        'results': results,
        'resources': get_process_metrics(),
    })
    write_manifest(out_dir, manifest)
    logger.info(f"Fit complete: {[r['stream'] for r in results]}")
    return 0
