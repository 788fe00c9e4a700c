"""Simulation of longitudinally detected NV-NMR (AERIS / DRACAERIS)."""

__version__ = "0.1.0"
