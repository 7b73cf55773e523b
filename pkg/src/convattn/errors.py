"""Exception types shared across the package."""


class DataError(ValueError):
    """Dataset content is inconsistent with what an operation needs
    (e.g. a class missing from the training split)."""


class FormatError(ValueError):
    """A file on disk is malformed; the message names the offending
    line or field where possible."""


class UnsupportedOperationError(RuntimeError):
    """The requested operation is not available for this model variant
    (e.g. explanations on an ablated model without attention)."""


class UsageError(Exception):
    """Invalid command-line flag combination; maps to exit code 2."""
