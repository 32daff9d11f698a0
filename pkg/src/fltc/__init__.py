"""Numerical toolkit for trivializable convolutions of diffusion semigroups."""

__version__ = "0.1.0"
