"""Driven-dissipative polariton fluid simulator for analogue horizons."""

__version__ = "0.1.0"
