"""Cyber-physical distribution-system restoration planning."""
__version__ = "0.1.0"
