"""
Numerical core: covariances, noise fields, the lattice solver, Feynman-Kac
moments, variational problems and the asymptotic formulas.
"""
