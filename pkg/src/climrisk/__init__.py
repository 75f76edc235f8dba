"""Precipitation-driven home insurance claim modelling and copula ensemble risk."""

__version__ = "0.1.0"
