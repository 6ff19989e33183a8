"""Numerical lab for the parabolic Anderson model with Gaussian noise"""

__version__ = "0.1.0"
