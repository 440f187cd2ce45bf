"""Exception hierarchy shared by every cafe module."""


class CafeError(Exception):
    """Base class for all errors raised by cafe."""

    code = "cafe_error"


class InvalidInput(CafeError, ValueError):
    code = "invalid_input"


class NumericalError(CafeError, ArithmeticError):
    """A computation produced non-finite values or failed to converge."""

    code = "numerical_error"


class DegenerateBatch(NumericalError):
    """A group covariance is singular, so the Gaussian KL is undefined.

    Raised instead of regularizing the target covariance; the usual cure is
    a larger batch or more (hence smaller) feature groups.
    """

    code = "degenerate_batch"

    def __init__(self, message, group=None, hint=None):
        self.group = group
        self.hint = hint if hint is not None else "reduce k or increase batch size (need k > d / B)"
        detail = message
        if group is not None:
            detail = f"group {group}: {detail}"
        super().__init__(f"{detail}; {self.hint}")


class FormatError(CafeError):
    """Binary file does not follow the expected layout."""

    code = "format_error"


class VersionMismatch(FormatError):
    code = "version_mismatch"


class TruncatedFile(FormatError):
    code = "truncated_file"


class ChecksumError(FormatError):
    code = "checksum_error"
