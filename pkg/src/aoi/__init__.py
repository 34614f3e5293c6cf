"""Edge automated optical inspection engine."""

__version__ = "0.1.0"
