from typing import Dict, Any, List, Optional
import argparse
import io
import logging
import os
import re

import numpy as np
import pandas as pd

from shdp.commands.fit import read_manifest
from shdp.commands.schemas import load_command_spec
from shdp.errors import ArgumentError, DataValidationError
from shdp.models.chain import ModelConfig
from shdp.models.dataset import Dataset, StandardizationRecord
from shdp.models.summary import PosteriorSummary
from shdp.services.checkpoint import read_records
from shdp.services.data import load_csv
from shdp.services.partitions import enumerate_set_partitions
from shdp.services.summaries import average_linkage_order, pool_chains, summarize_response
from shdp.utils.heatmap import save_heatmap
from shdp.utils.helpers import atomic_write_json, atomic_write_text, create_report

logger = logging.getLogger(__name__)

ENTROPY_ROW = 'entropy'


def register(subparsers) -> None:
    parser = subparsers.add_parser('summarize', help='Turn sample streams into tables, densities and heatmaps')
    parser.add_argument('--run-dir', required=True, help='Output directory of a fit run')
    parser.add_argument('--out-dir', default=None, help='Where to write summaries (default: RUN_DIR/summary)')
    parser.add_argument('-i', '--input', default=None,
                        help='Original dataset for density grids (default: the fitted input)')
    parser.add_argument('--burn-in', type=int, default=0, help='Extra iterations to drop from every chain')
    parser.add_argument('--level', type=float, default=0.95, help='Credible interval level')
    parser.add_argument('--signed', action='store_true', default=None,
                        help='Co-cluster on signed dishes instead of dish pairs')
    parser.add_argument('--no-density', action='store_true', help='Skip density estimates')
    parser.set_defaults(handler=cmd_summarize)


def safe_name(label: str) -> str:
    return re.sub(r'[^A-Za-z0-9_.-]', '_', str(label))


def load_chains(run_dir: str, n_chains: int) -> List[List[Dict[str, Any]]]:
    chains = []
    for c in range(n_chains):
        path = os.path.join(run_dir, f"chain_{c}.ndjson")
        if not os.path.exists(path):
            logger.warning(f"Missing stream for chain {c}: {path}")
            continue
        chains.append(list(read_records(path)))
    return chains


def pool_chains_per_chain(chains: List[List[Dict[str, Any]]], burn_in: int) -> List[List[Dict[str, Any]]]:
    """Drop iterations <= burn_in in every chain, keeping chains separate."""
    return [pool_chains([records], burn_in) for records in chains]


def partition_table(summaries: List[PosteriorSummary], alphabet: List[str]) -> pd.DataFrame:
    """One row per partition of the populations plus an entropy row, one column per response."""
    J = len(alphabet)
    index = [p.to_string(alphabet) for p in enumerate_set_partitions(J)] + [ENTROPY_ROW]
    columns = {}
    for summary in summaries:
        probs = summary.partition_probs.as_mapping()
        columns[summary.response] = [probs.get(p, 0.0) for p in enumerate_set_partitions(J)] + [summary.entropy]
    frame = pd.DataFrame(columns, index=index)
    frame.index.name = 'partition'
    return frame


def ordered_table(summaries: List[PosteriorSummary]) -> pd.DataFrame:
    rows = [(s.response, key, prob) for s in summaries for key, prob in s.ordered_partition_probs.items()]
    return pd.DataFrame(rows, columns=['response', 'ordered_partition', 'probability'])


def interval_table(summaries: List[PosteriorSummary], alphabet: List[str]) -> pd.DataFrame:
    rows = [(s.response, alphabet[j], mean, lo, hi)
            for s in summaries for j, (mean, lo, hi) in enumerate(s.theta_ci)]
    return pd.DataFrame(rows, columns=['response', 'population', 'mean', 'lower', 'upper'])


def cluster_count_table(summaries: List[PosteriorSummary]) -> pd.DataFrame:
    rows = [(s.response, k, p) for s in summaries for k, p in s.cluster_count_pmf.items()]
    return pd.DataFrame(rows, columns=['response', 'n_dishes', 'probability'])


def write_frame(frame: pd.DataFrame, path: str, index: bool = False) -> None:
    buffer = io.StringIO()
    frame.to_csv(buffer, index=index, float_format='%.6g')
    atomic_write_text(path, buffer.getvalue())


def _original_data(path: Optional[str], manifest: Dict[str, Any]) -> Optional[Dataset]:
    if not path or not os.path.exists(path):
        logger.warning("Original dataset not available; densities are skipped")
        return None
    settings = manifest['settings']
    return load_csv(path, settings['schema'], settings['severity_order'], settings['response_order'])


def cmd_summarize(args: argparse.Namespace) -> int:
    spec = load_command_spec({'subcommand': 'summarize', 'input': args.input, 'out_dir': args.out_dir})
    manifest = read_manifest(args.run_dir)
    out_dir = spec['out_dir'] or os.path.join(args.run_dir, 'summary')
    config = ModelConfig.from_dict(manifest['config'])
    dataset_info = manifest['dataset']
    alphabet = [str(label) for label in dataset_info['populations']]
    responses = [str(label) for label in dataset_info['responses']]
    standardization = (StandardizationRecord.from_dict(dataset_info['standardization'])
                       if dataset_info.get('standardization') else None)
    signed = args.signed if args.signed is not None else manifest['settings'].get('signed_dishes', False)

    chains = pool_chains_per_chain(load_chains(args.run_dir, manifest['chains']), args.burn_in)
    if not any(chains):
        raise ArgumentError(f"No sample records in {args.run_dir}")
    data = None if args.no_density else _original_data(spec['input'] or manifest.get('input'), manifest)
    if data is not None and data.response_labels != responses:
        raise DataValidationError(f"Dataset responses {data.response_labels} do not match the run {responses}")

    summaries = []
    for m, response in enumerate(responses):
        summary = summarize_response(chains, m, response, config.P0_for(m), data=data,
                                     standardization=standardization, alphabet=alphabet,
                                     level=args.level, signed=signed)
        summaries.append(summary)
        stem = safe_name(response)
        order = average_linkage_order(summary.coclust)
        boundaries = list(np.cumsum(dataset_info['sizes'])[:-1])
        write_frame(pd.DataFrame(summary.coclust), os.path.join(out_dir, f"coclust_{stem}.csv"))
        save_heatmap(summary.coclust, os.path.join(out_dir, f"coclust_{stem}.svg"),
                     boundaries=boundaries, title=response)
        save_heatmap(summary.coclust, os.path.join(out_dir, f"coclust_{stem}_sorted.svg"),
                     order=order, title=f"{response} (reordered)")
        if summary.density:
            grid = next(iter(summary.density.values()))[0]
            frame = pd.DataFrame({'x': grid})
            for j, (_, values) in sorted(summary.density.items()):
                frame[alphabet[j]] = values
            write_frame(frame, os.path.join(out_dir, f"density_{stem}.csv"))

    write_frame(partition_table(summaries, alphabet), os.path.join(out_dir, 'partitions.csv'), index=True)
    write_frame(ordered_table(summaries), os.path.join(out_dir, 'ordered_partitions.csv'))
    write_frame(interval_table(summaries, alphabet), os.path.join(out_dir, 'credible_intervals.csv'))
    write_frame(cluster_count_table(summaries), os.path.join(out_dir, 'cluster_counts.csv'))
    atomic_write_json(os.path.join(out_dir, 'summary.json'),
                      create_report(True, data=[s.to_dict(alphabet) for s in summaries],
                                    message=f"Summarized {len(summaries)} response(s)"))
    logger.info(f"Wrote summaries for {len(summaries)} response(s) to {out_dir}")
    return 0
