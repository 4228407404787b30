import argparse
import json
import logging

from shdp.commands.schemas import load_command_spec
from shdp.models.chain import MCMCOptions
from shdp.services.validation import CHECKS, run_validation
from shdp.utils.helpers import atomic_write_json, create_report, to_jsonable
from shdp.utils.monitoring import get_process_metrics

logger = logging.getLogger(__name__)

EXIT_CHECK_FAILED = 1


def register(subparsers) -> None:
    names = [name for name, _ in CHECKS]
    parser = subparsers.add_parser('validate', help='Run the invariant and oracle self-checks')
    parser.add_argument('--seed', type=int, default=0)
    parser.add_argument('--quick', action='store_true', help='Smaller Monte-Carlo sizes with widened thresholds')
    parser.add_argument('--only', action='append', choices=names, default=None, help='Run only this check')
    parser.add_argument('--inject-fault', choices=names, default=None,
                        help='Corrupt one check to exercise failure reporting')
    parser.add_argument('--real-data', default=None, help='CSV of the hypertension study, if available')
    parser.add_argument('--real-iterations', type=int, default=10000)
    parser.add_argument('--real-burn-in', type=int, default=5000)
    parser.add_argument('-o', '--output', default=None, help='Also write the report to this file')
    parser.set_defaults(handler=cmd_validate)


def cmd_validate(args: argparse.Namespace) -> int:
    spec = load_command_spec({'subcommand': 'validate', 'seed': args.seed, 'output': args.output})
    real_options = MCMCOptions(iterations=args.real_iterations, burn_in=args.real_burn_in)
    results = run_validation(seed=spec['seed'], quick=args.quick, inject_fault=args.inject_fault,
                             only=args.only, real_data_path=args.real_data, real_data_options=real_options)
    failed = [r.name for r in results if not r.passed]
    report = create_report(
        success=not failed,
        data={'checks': [r.to_dict() for r in results], 'resources': get_process_metrics()},
        message=f"{len(results) - len(failed)}/{len(results)} checks passed",
        error=f"Failed checks: {failed}" if failed else None,
    )
    print(json.dumps(report, indent=2, default=to_jsonable))
    if spec['output']:
        atomic_write_json(spec['output'], report)
    if failed:
        logger.error(f"Validation failed: {failed}")
        return EXIT_CHECK_FAILED
    return 0
