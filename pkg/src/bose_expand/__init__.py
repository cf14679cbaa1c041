"""Asymptotic expansion of the mean-field Bose gas on a cutoff torus, with an exact-diagonalization oracle."""

__version__ = "0.1.0"
