"""Certified Lipschitz-gamma jet calculus.

Symmetric tensor norms, jets with certified remainder constants, the
embedding / product / composition calculus with explicit constants, a
quantitative inverse-function solver, and a flow engine that checks
a-priori regularity bounds empirically.
"""

__version__ = "0.1.0"

from .errors import CertificationError, InputError, LipjetError  # noqa: F401
from .jet import LipGrade, LipJet, lip_grade  # noqa: F401
from .tensor import LinearMap, NormFamily, Permutation, SymTensor  # noqa: F401
