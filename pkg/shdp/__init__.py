import argparse
import json
import logging
import os
import sys
from typing import List, Optional

from dotenv import load_dotenv
from marshmallow import ValidationError

from shdp.errors import (
    ArgumentError,
    CheckpointError,
    DataValidationError,
    DomainError,
    FeasibilityError,
    NumericalError,
    PartitionBoundsError,
)
from shdp.utils.helpers import utc_timestamp

__version__ = '1.0.0'

# Load environment variables
load_dotenv()

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4

ERROR_HANDLERS = [
    ((ValidationError, ArgumentError, DomainError, PartitionBoundsError, FeasibilityError,
      DataValidationError), 'Validation Error', EXIT_VALIDATION),
    ((NumericalError,), 'Numerical Error', EXIT_NUMERICAL),
    ((CheckpointError, OSError), 'I/O Error', EXIT_IO),
]


def create_app() -> argparse.ArgumentParser:
    """Build the command-line parser with every subcommand registered."""
    setup_logging()

    parser = argparse.ArgumentParser(
        prog='shdp',
        description='Model selection across ordered populations with the symmetric hierarchical Dirichlet process',
    )
    parser.add_argument('--version', action='version', version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest='command', required=True)

    register_commands(subparsers)

    return parser


def setup_logging() -> None:
    log_level = os.getenv('SHDP_LOG', 'INFO').upper()
    log_file = os.getenv('SHDP_LOG_FILE')

    handlers: List[logging.Handler] = [logging.StreamHandler()]
    if log_file:
        directory = os.path.dirname(log_file)
        if directory:
            os.makedirs(directory, exist_ok=True)
        handlers.append(logging.FileHandler(log_file))

    logging.basicConfig(
        level=getattr(logging, log_level, logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers,
        force=True,
    )


def register_commands(subparsers) -> None:
    from shdp.commands import COMMANDS

    for command in COMMANDS:
        command.register(subparsers)


def handle_error(error: BaseException) -> int:
    """Report an exception as a JSON body on stderr and return its exit code."""
    for types, title, status in ERROR_HANDLERS:
        if isinstance(error, types):
            break
    else:
        title, status = 'Internal Error', EXIT_ERROR
        logging.getLogger(__name__).exception('Unhandled error')

    message = error.messages if isinstance(error, ValidationError) else str(error)
    body = {
        'error': title,
        'message': message,
        'status': status,
        'timestamp': utc_timestamp(),
    }
    for attribute in ('chain', 'iteration', 'row'):
        value = getattr(error, attribute, None)
        if value is not None:
            body[attribute] = value
    print(json.dumps(body), file=sys.stderr)
    return status


def main(argv: Optional[List[str]] = None) -> int:
    parser = create_app()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except KeyboardInterrupt:
        logging.getLogger(__name__).warning('Interrupted; rerun with --resume to continue from the last checkpoint')
        return 130
    except Exception as e:
        return handle_error(e)
