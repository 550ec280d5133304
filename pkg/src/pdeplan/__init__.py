"""Periodic demand estimation for tactical service network design."""

__version__ = "0.1.0"
