"""Next-item recommendation for in-game item purchases."""
__version__ = "0.1.0"
