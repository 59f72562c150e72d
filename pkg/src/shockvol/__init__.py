"""Poisson-shock stochastic volatility: simulation, pricing and asymptotics."""

__version__ = "0.1.0"
