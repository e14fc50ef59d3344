"""Bayesian score-difference model for rugby: effort, ability, home advantage."""
__version__ = "0.1.0"
