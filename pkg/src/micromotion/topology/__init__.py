"""Pseudo-spin fields on the (k1, k2, alpha) torus and their invariants."""

from .chern import chern_number
from .field import (
    PseudoSpinGrid,
    TopologySummary,
    VectorFieldGrid,
    chern_slices,
    current_field,
    gauge_field,
    hopf_invariant,
    hopf_texture,
    pseudospin_grid,
    summarize,
)
from .curves import PreimageCurve, preimage_curves
from .linking import gauss_linking, linking_number

__all__ = [
    "PreimageCurve",
    "PseudoSpinGrid",
    "TopologySummary",
    "VectorFieldGrid",
    "chern_number",
    "chern_slices",
    "current_field",
    "gauge_field",
    "gauss_linking",
    "hopf_invariant",
    "hopf_texture",
    "linking_number",
    "preimage_curves",
    "pseudospin_grid",
    "summarize",
]
