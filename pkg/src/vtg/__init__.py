"""Visual-tactile shape completion toolkit."""

__version__ = "0.1.0"
