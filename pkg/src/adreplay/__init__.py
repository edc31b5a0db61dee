"""Ad-aware web archive replay engine."""

__version__ = "0.1.0"
