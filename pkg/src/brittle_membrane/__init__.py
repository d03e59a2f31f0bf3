"""Numerical machinery for thin brittle elastic membranes.

Reduced membrane densities, rank-one envelopes by lamination, crack-opening
piecewise-affine maps, explicit laminate test fields and a thin-film
convergence harness.
"""
from .linalg import CertificateError, ContractError, ExtReal, Mat32, Mat33

__version__ = "0.1.0"

__all__ = ["CertificateError", "ContractError", "ExtReal", "Mat32", "Mat33"]
