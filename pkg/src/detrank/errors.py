"""Typed exception hierarchy shared by all detrank modules.

The CLI maps these onto process exit codes: usage errors exit 1, I/O and
format errors exit 2, not-applicable conditions exit 3, and numerical
failures exit 4.
"""


class DetrankError(Exception):
    """Base class for all errors raised by this package."""


class BundleFormatError(DetrankError):
    """A bundle file has bad magic bytes, an unsupported version, or a
    truncated / inconsistent layout."""


class BundleCorruptionError(DetrankError):
    """A bundle file parsed structurally but failed its checksum."""


class BundleValidationError(DetrankError):
    """Bundle contents violate an invariant (bad box, bad label, non-finite
    value, inconsistent shapes)."""


class NotApplicableError(DetrankError):
    """The requested score is undefined for the given input, e.g. a
    class-separability score on a single-class bundle."""


class NumericalError(DetrankError):
    """A numerical routine failed (decomposition breakdown, singular
    regularized scatter, ...)."""
