"""Numerical lab for the imitative monomer-dimer mean-field model."""

__version__ = "0.1.0"
