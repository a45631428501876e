"""Finite element simulation of unsaturated flow in heterogeneous poroelastic
media, with implicit, semi-implicit and fixed-operator implicit-explicit time
stepping and a spectral two-grid solver with Vanka smoothing."""

__version__ = "0.1.0"
