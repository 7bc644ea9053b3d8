"""Rigid bodies in a bounded 2D ideal fluid: boundary-integral solvers,
potentials, full and limit dynamics, and a convergence laboratory."""

__version__ = "0.1.0"
