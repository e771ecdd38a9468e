"""Zero-knowledge proof-of-contact tracing."""

__version__ = "0.1.0"
