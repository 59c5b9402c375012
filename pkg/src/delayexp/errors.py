"""Shared exception hierarchy.

The command line maps these onto exit codes: malformed input is exit 2,
domain violations on otherwise well-formed input are exit 3. Numerical
warnings never raise; they travel as flags on result objects instead.
"""


class DelayexpError(Exception):
    """Base class for every error raised by this package."""


class BadInputError(DelayexpError):
    """Malformed input: bad matrices, files, or config payloads."""


class DomainError(DelayexpError):
    """Structurally valid input outside an operation's domain."""
