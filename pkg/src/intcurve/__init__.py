"""Certified integral curves: Picard iteration, Grönwall envelopes, chart-based manifold integration."""

__version__ = "0.1.0"
