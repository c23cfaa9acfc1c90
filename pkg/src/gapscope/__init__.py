"""Energy-gap spectroscopy from TE-PAI circuits and classical shadows."""

__version__ = "0.1.0"
