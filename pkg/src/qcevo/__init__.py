"""Quantum circuit evolution (ansatz-free and pseudo-counterdiabatic) for set partitioning."""

__version__ = "0.1.0"
