"""Numerical laboratory for controlled skew products over the Smale-Williams solenoid."""

__version__ = "0.1.0"
