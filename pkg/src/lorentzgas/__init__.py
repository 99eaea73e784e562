"""Lorentz gas and kicked-Hamiltonian simulation toolkit for the low
scatterer-density (Boltzmann-Grad) limit: scatterer configurations, exact
event-driven dynamics, free-path statistics, analytic transition kernels, and
the limiting random flight process."""

__version__ = "0.1.0"
