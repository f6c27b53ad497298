"""Two-timescale learned hybrid precoding with limited feedback for mmWave MIMO links."""

__version__ = "0.1.0"
