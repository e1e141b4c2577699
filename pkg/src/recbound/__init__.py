"""Compositional recurrence-based summarization and bound analysis for
recursive numerical programs."""

__version__ = "0.1.0"
