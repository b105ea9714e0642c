"""Numerical laboratory for normal approximation of Langevin Monte Carlo
ergodic averages: chain simulation, exact linear-case analytics, Stein
gradient fields, martingale/remainder decomposition, exchangeable-pair
diagnostics, and empirical Wasserstein measurement."""

__version__ = "0.1.0"
