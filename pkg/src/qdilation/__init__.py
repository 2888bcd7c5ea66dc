"""Dilations of Q-commuting contractions on lazily graded spaces."""

__version__ = "0.1.0"
