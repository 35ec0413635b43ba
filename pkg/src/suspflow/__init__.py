"""Simulation and estimation tools for suspension semiflows over
non-uniformly expanding maps."""

__version__ = "0.1.0"
