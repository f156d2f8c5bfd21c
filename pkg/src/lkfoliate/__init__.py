"""Numerical engine for Loewner-Kufarev evolutions driven by absolutely
continuous measure families: disk and whole-plane foliations, winding
fields, energy duality, reversibility, and conformal distortion."""

__version__ = "0.1.0"
