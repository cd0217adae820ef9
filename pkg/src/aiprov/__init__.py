"""Provenance tracking and confidential exchange of AI assets on a simulated ledger."""

__version__ = "0.1.0"
