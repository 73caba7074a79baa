"""Error taxonomy shared across the package.

The CLI maps these (plus ValueError/OSError on user inputs) to exit code 2;
anything else is an internal error (exit code 1).
"""


class SelcalError(Exception):
    """Base class for input-level failures."""


class FormatError(SelcalError):
    """Container magic/version is wrong; not a .selc file we understand."""


class CorruptionError(SelcalError):
    """Container structure is inconsistent (truncated payload, bad lengths)."""


class ValidationError(SelcalError):
    """Data violates a declared invariant (labels out of range, NaN logits...)."""


class ConfigError(SelcalError):
    """A configuration document or option combination is invalid."""
