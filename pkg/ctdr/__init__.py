"""ctdr - continuous-time doubly robust estimation and its Monte Carlo checks."""

__version__ = "0.1.0"
