"""Bootstrap AMG setup with algebraic-distance strength of connection."""

__version__ = "0.1.0"
