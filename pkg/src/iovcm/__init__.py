"""Congestion modelling and proactive packet scheduling for vehicular networks."""

__version__ = "0.1.0"
