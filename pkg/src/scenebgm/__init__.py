"""Scene-driven background music description engine."""

__version__ = "0.1.0"
