"""Screenshot-driven GUI exploration with a curiosity-rewarded deep Q-network."""

__version__ = "0.1.0"
