"""Lookahead incident-response planning with a generative world model."""

__version__ = "0.1.0"
