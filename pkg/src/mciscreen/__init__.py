"""Screening pipeline for MCI vs NC classification from layered speech features."""

__version__ = "0.1.0"
