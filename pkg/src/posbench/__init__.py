"""Position-aware retrieval benchmarks and positional-bias measurement."""

__version__ = "0.1.0"
