"""Vision-language-garment laboratory."""

__version__ = "0.1.0"
