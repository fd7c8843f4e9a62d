"""Hyper-parameter search for convolutional classifiers: random warm-up,
Gaussian-process surrogate with probability-of-improvement proposals, and
top-k ensembles."""

__version__ = "0.1.0"
