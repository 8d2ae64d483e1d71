"""botverse: sandboxed event-driven multi-agent social network simulator."""

__version__ = "0.1.0"
