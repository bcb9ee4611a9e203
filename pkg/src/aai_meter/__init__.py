"""aai-meter: measurement engine for the Autonomous AI Scale.

Consumes structured agent-evaluation traces (JSONL) plus a battery
configuration and computes ten normalized capability axes, the
composite index, self-improvement dynamics, level gates, and
autonomy-quality frontier analytics. A synthetic simulator exercises
the full pipeline end to end.
"""

__version__ = "0.1.0"

from .errors import ConfigError, EvidenceError, MeterError, NoDataError

__all__ = [
    "__version__",
    "MeterError",
    "ConfigError",
    "NoDataError",
    "EvidenceError",
]
