"""Margin-uniformity dynamics of gradient descent on batch-normalized linear
and single-filter convolutional models, with independent reference solvers,
convergence-rate fitting, and synthetic generalization benchmarks."""

__version__ = "0.1.0"
