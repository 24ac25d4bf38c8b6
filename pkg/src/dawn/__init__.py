"""Dual-memory attention tracker with a numpy reverse-mode autodiff core."""

__version__ = "0.1.0"
