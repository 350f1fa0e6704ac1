"""Self-flow-matching assisted full-waveform inversion on 2D acoustic models."""

__version__ = "0.1.0"
