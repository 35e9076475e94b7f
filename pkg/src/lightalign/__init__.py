"""lightalign - non-neural entity alignment by three-view label propagation."""

__version__ = "0.1.0"
