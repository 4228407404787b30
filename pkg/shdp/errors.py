"""Exception types raised by the s-HDP library and mapped to exit codes by the CLI."""

from typing import Optional


class PartitionBoundsError(ValueError):
    """Population count or population index outside the supported range."""


class DomainError(ValueError):
    """A parameter lies outside its mathematical domain (e.g. a non-positive concentration)."""


class ArgumentError(ValueError):
    """Malformed arguments: mismatched lengths, empty candidate lists, unknown identifiers."""


class FeasibilityError(ValueError):
    """An exact computation was requested on an input too large to enumerate."""


class DataValidationError(ValueError):
    """A dataset violates an invariant (empty population, zero spread, missing responses)."""


class DataParseError(DataValidationError):
    """A data file could not be parsed; carries the offending row when known."""

    def __init__(self, message: str, row: Optional[int] = None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class NumericalError(RuntimeError):
    """Non-finite state produced during sampling."""

    def __init__(self, message: str, chain: Optional[int] = None, iteration: Optional[int] = None):
        self.chain = chain
        self.iteration = iteration
        context = []
        if chain is not None:
            context.append(f"chain {chain}")
        if iteration is not None:
            context.append(f"iteration {iteration}")
        if context:
            message = f"{message} ({', '.join(context)})"
        super().__init__(message)


class CheckpointError(RuntimeError):
    """A checkpoint or sample stream could not be read or written."""

    def __init__(self, message: str, chain: Optional[int] = None, iteration: Optional[int] = None):
        self.chain = chain
        self.iteration = iteration
        if chain is not None:
            message = f"{message} (chain {chain}, iteration {iteration})"
        super().__init__(message)
