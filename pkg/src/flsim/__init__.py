"""Deterministic federated-learning simulator over a bandwidth-limited wireless cell."""

__version__ = "0.1.0"
