"""Structured pruning of spiking neural networks under SynOps and parameter budgets."""

__version__ = "0.1.0"
