"""Reliability-aware NFV service placement with a deep Q-network agent."""

__version__ = "0.1.0"
