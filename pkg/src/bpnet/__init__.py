"""Enhanced backpressure routing: simulator, bias functions, margin LP and DP oracle."""

__version__ = "0.1.0"
