"""Recovery-complexity laboratory for proxy-gradient test-time adaptation."""

__version__ = "0.1.0"
