"""Leader-based energy management for clustered drone fleets, simulated."""

__version__ = "0.1.0"
