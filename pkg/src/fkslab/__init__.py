"""Random-cluster (FK) simulation toolkit: exact oracles, Markov chains,
surface-tension and sprinkling estimators, and a static renormalization."""

__version__ = "0.1.0"
