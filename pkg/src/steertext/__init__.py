"""Desk-scale steerable text generation: topic options plus a conditioned LM."""

__version__ = "0.1.0"
