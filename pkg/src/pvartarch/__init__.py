"""Periodic VAR-TARCH modelling of hourly electricity spot prices."""

__version__ = "0.1.0"
