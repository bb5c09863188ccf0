"""Simulation and analysis of Floquet-engineered transmon chains."""

__version__ = "0.1.0"
