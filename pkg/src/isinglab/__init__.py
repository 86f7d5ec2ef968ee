"""Numerical laboratory for the critical square-lattice Ising model.

Exact enumeration, discrete boundary-value solvers, closed-form continuum
correlation functions, and Wolff Monte Carlo, cross-verified against each
other.
"""

__version__ = "0.1.0"
