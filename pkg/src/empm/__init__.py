"""Ab initio cryo-EM reconstruction with principal-mode alignment."""

__version__ = "0.1.0"
