"""Sparse superposition codes over memoryless channels: GAMP decoding,
state evolution, potentials and spatial coupling."""

__version__ = "0.1.0"
