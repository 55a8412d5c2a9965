"""Receding-horizon multi-agent 3D coverage planning with learned visibility."""

__version__ = "0.1.0"
