"""Desk-scale hybrid quantum/HPC orchestration stack."""

__version__ = "0.1.0"
