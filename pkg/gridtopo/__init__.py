"""
Estimation of sparse complex-valued Laplacian (admittance) matrices
from power-system measurements.
"""

__version__ = '0.1.0'
