"""Exception types shared across the package.

Two failure classes are kept apart on purpose: bad inputs (rejected
preconditions, malformed files) and mathematical certification failures
(a bound that should hold did not).  The CLI maps them to exit codes 1
and 2 respectively.
"""


class LipjetError(Exception):
    """Base class for all package errors."""


class InputError(LipjetError, ValueError):
    """A precondition on the inputs is violated; the request is rejected."""


class CertificationError(LipjetError, RuntimeError):
    """A certified bound or guaranteed contract failed to hold."""
