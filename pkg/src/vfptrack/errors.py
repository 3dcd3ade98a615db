"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Shapes of interacting tensors do not agree."""


class ConfigError(ValueError):
    """A configuration value violates an invariant or names an unknown key."""


class ProtocolError(RuntimeError):
    """An operation was called out of its allowed sequence."""


class ParseError(ValueError):
    """A file on disk is malformed; message carries path and byte offset."""


class AuditError(RuntimeError):
    """A parameter accounting check (partition, budget) failed."""


class OptimizerError(RuntimeError):
    """Optimizer aborted, e.g. on a non-finite gradient."""
