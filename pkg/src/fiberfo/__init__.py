"""Cardiac fiber director fields computed as Frank-Oseen nematic liquid crystals."""
__version__ = "0.1.0"
