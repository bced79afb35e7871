"""Random quasi-one-dimensional Dirac operators with time-reversal symmetry."""
