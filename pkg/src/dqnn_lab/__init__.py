"""Simulator and experiment harness for dissipative quantum neural networks."""

__version__ = "0.1.0"
