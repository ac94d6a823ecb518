"""Multi-criteria process parameter optimization with random-forest surrogates,
AHP criteria weights and deep Q-network search."""

__version__ = "0.1.0"
