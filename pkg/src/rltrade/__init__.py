"""Tabular and linear reinforcement learning with exact oracles, plus a toy trading environment."""

__version__ = "0.1.0"
