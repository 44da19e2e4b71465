"""Network slice placement simulator with heuristic, exact and actor-critic engines."""

__version__ = "1.0.0"
