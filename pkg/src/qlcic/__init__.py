"""Quasi-linear codes for the three-user additive interference channel over F_q."""

from .gf import FieldError, PrimeField
from .probspace import CapacityError, JointPmf, Pmf, entropy, lin_comb_pmf, typical_set

__all__ = ["CapacityError", "FieldError", "JointPmf", "Pmf", "PrimeField", "entropy", "lin_comb_pmf", "typical_set"]
__version__ = "0.1.0"
