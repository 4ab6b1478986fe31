"""Optimal switching with cadlag switching costs: tree DP, reflected BSDE
systems, an HJB finite-difference solver and a brute-force strategy oracle."""

__version__ = "0.1.0"
