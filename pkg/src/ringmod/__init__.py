"""Discrete p-modulus, generalized chordal metrics and ring Q-map experiments."""

__version__ = "0.1.0"

from .chordal import INFINITY, ChordalParams, chordal_diameter, chordal_distance, ptolemy_check, triangle_audit
from .fmo import PsiProfile, ScalarField, fmo_classify, psi_integral
from .modulus import INFINITE, PathFamily, compute_p_modulus, condenser_capacity
from .space import DiscreteSpace, build_grid_domain, disk_domain, graph_space

__all__ = [
    "INFINITY",
    "INFINITE",
    "ChordalParams",
    "DiscreteSpace",
    "PathFamily",
    "PsiProfile",
    "ScalarField",
    "build_grid_domain",
    "chordal_diameter",
    "chordal_distance",
    "compute_p_modulus",
    "condenser_capacity",
    "disk_domain",
    "fmo_classify",
    "graph_space",
    "psi_integral",
    "ptolemy_check",
    "triangle_audit",
]
