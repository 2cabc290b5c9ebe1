"""Coverage and rate analysis of mmWave cellular networks with hybrid MIMO."""

__version__ = "0.1.0"
