"""Gauss-Seidel soft-output MMSE detection for uplink massive MIMO, with baselines and a link simulator."""

__version__ = "0.1.0"
