"""Exception types shared across the engine."""


class MeterError(Exception):
    """Base class for all engine errors."""


class ConfigError(MeterError):
    """Invalid or inconsistent configuration."""


class NoDataError(MeterError):
    """An estimator received no usable observations.

    Distinct from a legitimate zero: axes report this as a separate
    "no-data" state so gates can treat missing evidence differently
    from measured-zero capability.
    """


class EvidenceError(MeterError):
    """Gate evaluation received malformed or incomplete evidence."""
