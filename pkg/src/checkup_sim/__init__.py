"""Agent-based simulator of cancer check-ups and SMS reminder campaigns."""

__version__ = "0.1.0"
