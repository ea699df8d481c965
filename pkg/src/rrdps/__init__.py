"""Secret-key rates for round-robin DPS QKD with imperfect sources."""

__version__ = "0.1.0"
