"""Nowcasting hidden-population trends from indirect (aggregated relational) surveys."""

__version__ = "0.1.0"
