"""Optimization-free score fitting by eigenfunction expansion.

The score of a diffusion started from samples is fitted as a linear
combination of eigenfunctions of the backward Kolmogorov operator; the
coefficients come from small linear systems whose entries propagate
analytically in time.
"""

__version__ = "0.1.0"
