"""Bath-aware control of open quantum systems."""
__version__ = "0.1.0"
