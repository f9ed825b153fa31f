"""Multitask Arabic diacritic restoration."""
__version__ = "0.1.0"
