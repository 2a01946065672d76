"""Double-covariance stochastic simulation engine."""

__version__ = "0.1.0"
