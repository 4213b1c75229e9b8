"""Transmission expansion planning with TCSC flow control as MILP models."""

__version__ = "0.1.0"
