"""Analytical simulator and design-space explorer for a non-coherent
silicon-photonic transformer accelerator."""

__version__ = "0.1.0"

SCHEMA_VERSION = 1
