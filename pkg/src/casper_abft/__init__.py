"""Revised binary CBC Casper consensus with reliable broadcast and an adversarial simulator."""

__version__ = "0.1.0"
