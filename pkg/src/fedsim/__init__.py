"""Deterministic simulator for private and federated cloud provisioning."""

__version__ = "0.1.0"
