"""Memristive self-organizing AND/OR gates: flow, integration and stability analysis."""

__version__ = "0.1.0"
