"""Exception types shared across the package."""


class FedJudgeError(Exception):
    """Base class for all package errors."""


class ConfigError(FedJudgeError):
    """A configuration violates an invariant (bad sizes, fractions, counts)."""


class InputError(FedJudgeError):
    """An operation received malformed data (dimension mismatch, empty input)."""


class ProtocolError(FedJudgeError):
    """A protocol phase could not complete (missing ballot, malformed tally)."""


class AuthenticationError(FedJudgeError):
    """A block signature failed verification."""


class OrderingError(FedJudgeError):
    """A block does not extend the current chain tip."""
