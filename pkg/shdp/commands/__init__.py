"""Subcommands of the shdp command line, each registered like a blueprint."""

from . import fit, simulate, summarize, validate

COMMANDS = [simulate, fit, summarize, validate]

__all__ = ['COMMANDS', 'fit', 'simulate', 'summarize', 'validate']
