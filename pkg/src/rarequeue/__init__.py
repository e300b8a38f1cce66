"""Rare-event simulation of the loss probability of GI/G/s loss queues."""

__version__ = "0.1.0"
