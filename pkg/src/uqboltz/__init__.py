"""Stochastic-Galerkin Boltzmann solver and spectral-gap verification lab."""

__version__ = "0.1.0"
