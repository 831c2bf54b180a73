"""Shared exception hierarchy.

Two families matter to callers: InputError for anything a user could fix
by changing arguments or files, ComputationError for numeric failures in
an otherwise valid problem.  The command line maps them to exit codes 2
and 1 respectively.
"""


class PixeltrapError(Exception):
    pass


class InputError(PixeltrapError, ValueError):
    """Invalid argument, file, layout, or request."""


class ComputationError(PixeltrapError, RuntimeError):
    """A solver or integrator failed to meet its tolerance."""
