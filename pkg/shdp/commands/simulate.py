import argparse
import logging

from shdp.commands.schemas import load_command_spec
from shdp.services.data import DEFAULT_SIZES, DGPS, simulate, write_csv

logger = logging.getLogger(__name__)


def parse_sizes(text: str):
    try:
        return [int(part) for part in text.split(',') if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"sizes must be comma-separated integers, got {text!r}")


def register(subparsers) -> None:
    parser = subparsers.add_parser('simulate', help='Draw a synthetic dataset from a simulation design')
    parser.add_argument('--dgp', default='main', help=f"Simulation design, one of {sorted(DGPS)}")
    parser.add_argument('--seed', type=int, default=None, help='Random seed (required)')
    parser.add_argument('--sizes', type=parse_sizes, default=list(DEFAULT_SIZES),
                        help='Population sizes, comma separated')
    parser.add_argument('--n-responses', type=int, default=1, help='Independent responses to draw')
    parser.add_argument('-o', '--output', default='data.csv', help='CSV file to write')
    parser.set_defaults(handler=cmd_simulate)


def cmd_simulate(args: argparse.Namespace) -> int:
    spec = load_command_spec({'subcommand': 'simulate', 'seed': args.seed, 'output': args.output})
    dataset = simulate(args.dgp, args.sizes, seed=spec['seed'], n_responses=args.n_responses)
    write_csv(dataset, spec['output'])
    logger.info(f"Simulated {args.dgp} (seed {spec['seed']}) into {spec['output']}")
    return 0
