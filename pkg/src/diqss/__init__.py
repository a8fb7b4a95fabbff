"""Quantum-memory-assisted, single-photon-source DI quantum secret sharing lab."""

__version__ = "0.1.0"
