"""Quantum computed moments: Hamiltonian moments, Lanczos/CMX energy estimates and noise studies."""

__version__ = "0.1.0"
