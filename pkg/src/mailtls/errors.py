"""Exception hierarchy shared across the toolkit.

The CLI maps exceptions to exit codes: usage errors exit 1, input parse errors
exit 2, everything else that escapes exits 3.
"""

from __future__ import annotations


class MailTlsError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 3


class UsageError(MailTlsError):
    """Bad command line or incoherent flag combination."""

    exit_code = 1


class InputFormatError(MailTlsError):
    """A supplied input file does not parse or carries the wrong schema."""

    exit_code = 2
