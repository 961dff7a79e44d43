"""Synthesis, analysis and evaluation toolkit for context-aware fine-grained emotion datasets."""

__version__ = "0.1.0"
