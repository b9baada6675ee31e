"""Stochastic restricted Liu-type estimation for logistic regression."""

__version__ = "0.1.0"
