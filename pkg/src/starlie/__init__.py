"""Deformation quantization of duals of Lie algebras with exact arithmetic."""

__version__ = "0.1.0"
