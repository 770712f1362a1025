"""Public entry point for printing core statements as source text."""

from .syntax import pretty

__all__ = ["pretty"]
