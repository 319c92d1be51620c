"""Unitary spin dynamics with stochastic energy-conserving jumps."""

__version__ = "0.1.0"
