"""Multi-agent deep Q-learning for V2V spectrum and power allocation."""

__version__ = "0.1.0"
