"""Error categories shared by the library and the command line."""


class GroverMeanError(Exception):
    """Base class. ``category`` is the machine-readable label the CLI emits."""

    category = "error"


class PreconditionError(GroverMeanError, ValueError):
    """An input violates a documented precondition (the measured value is in the message)."""

    category = "precondition"


class CapExceeded(GroverMeanError):
    """A simulation would exceed a desk-scale resource cap."""

    category = "cap"

    def __init__(self, message: str, required: int, cap: int):
        super().__init__(f"{message}: needs {required} > cap {cap}")
        self.required = required
        self.cap = cap


class CertificateFailure(GroverMeanError):
    """A quantitative bound that must hold was observed to fail."""

    category = "certificate"


class DistributionFormatError(GroverMeanError, ValueError):
    """A distribution file is malformed; the message names the field and outcome index."""

    category = "io"


class NonUnitaryError(PreconditionError):
    pass


class PoleInBracket(PreconditionError):
    pass


class NoSignChange(PreconditionError):
    pass
