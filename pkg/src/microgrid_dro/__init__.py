"""Distributionally robust dynamic microgrid formation."""
from .netdata import CaseData, DgSpec, EdgeSpec, NodeSpec, load_case, save_case, validate_case
from .ieee37 import build_ieee37_case

__version__ = "0.1.0"

__all__ = [
    "CaseData",
    "DgSpec",
    "EdgeSpec",
    "NodeSpec",
    "build_ieee37_case",
    "load_case",
    "save_case",
    "validate_case",
]
