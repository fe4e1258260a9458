"""Density-ranking laboratory.

Small trained-from-scratch density models (affine coupling flow, masked
autoregressive pixel model), network-induced density estimators, external
complexity proxies, and rank-correlation analysis tooling.
"""

__version__ = "0.1.0"
