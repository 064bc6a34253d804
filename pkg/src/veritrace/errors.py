"""Exception hierarchy shared across the package."""


class VeritraceError(Exception):
    """Base class for all domain errors raised by this package."""


class TraceFormatError(VeritraceError):
    """A trace record or trace file violates the wire format or an invariant."""

    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        prefix = ""
        if line is not None:
            prefix += f"line {line}: "
        if field:
            prefix += f"at {field}: "
        super().__init__(prefix + message)


class SchemaMismatchError(VeritraceError):
    """Feature vector, dataset, or model schema_ids disagree."""


class ModelPersistenceError(VeritraceError):
    """A model file is corrupt, truncated, or from an incompatible version."""


class ProviderError(VeritraceError):
    """A provider call failed (transport, protocol, or exhausted retries)."""


class CapabilityError(ProviderError):
    """The endpoint does not support a required capability (e.g. logprobs)."""


class ContextNotFoundError(VeritraceError):
    """No context document could be retrieved for the requested key."""


class ReviewQueueError(VeritraceError):
    """Invalid review-queue operation (double resolution, non-escalated enqueue)."""


class ConfigError(VeritraceError):
    """Invalid run configuration or config file."""
