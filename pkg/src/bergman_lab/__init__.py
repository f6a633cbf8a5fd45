"""Numerical laboratory for invariant Bergman kernels.

Modules: model (ladder algebra on the model space), coefficients (expansion
coefficients from point geometry), projective (exact section spaces of the
projective models), asymptotics (fits and integrals from exact values),
toeplitz (Berezin-Toeplitz matrices) and cli (experiment runner).
"""
__version__ = "0.1.0"
