"""leosim: deterministic system-level simulator for LEO mega-constellation networks."""

__version__ = "0.1.0"
