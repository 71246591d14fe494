"""Multiple stochastic integrals with respect to fractional Brownian motion."""
__version__ = "0.1.0"
