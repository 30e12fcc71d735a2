"""Constructive Picard-iteration neural operators for 1-D semilinear heat equations."""

__version__ = "0.1.0"
