"""AADT estimation from 24-hour short counts with per-group support vector regression."""

__version__ = "0.1.0"
