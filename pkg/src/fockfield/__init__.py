"""Truncated-Fock-space simulator for photonic simulation of a lattice complex scalar field."""

__version__ = "0.1.0"
