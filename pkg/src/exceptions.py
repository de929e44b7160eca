"""Error hierarchy; every error carries the CLI exit code it maps to."""


class AsyncRLError(Exception):
    """Base class for all errors raised by the package"""
    exit_code = 1


class ConfigurationError(AsyncRLError, ValueError):
    """Invalid configuration, shape or dimension mismatch, unknown kind"""
    exit_code = 2


class DomainError(ConfigurationError):
    """Argument outside the mathematical domain of an operation"""


class UnsupportedError(AsyncRLError):
    """Operation is not available for the given object (e.g. non-enumerable env)"""
    exit_code = 2


class RuntimeFault(AsyncRLError):
    """A learner thread failed mid-run"""
    exit_code = 3


class EnvironmentFault(RuntimeFault):
    """An environment raised while being stepped or reset"""


class CheckpointError(AsyncRLError):
    """Base class for checkpoint load failures"""
    exit_code = 4
    code = "checkpoint_error"


class CheckpointHeaderError(CheckpointError):
    """Bad magic, unknown version, or a header shorter than expected"""
    code = "corrupt_header"


class CheckpointTruncatedError(CheckpointError):
    """Payload shorter than the header promises"""
    code = "truncated_payload"


class CheckpointSpecMismatchError(CheckpointError):
    """Checkpoint was written for a different network layout"""
    code = "spec_mismatch"
