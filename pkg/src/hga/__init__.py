"""Adapter tuning for frozen heterogeneous-graph encoders."""

__version__ = "0.1.0"
