"""Floquet micro-motion toolkit: Hopf invariants on the (k1, k2, alpha) torus and strip edge states."""

from .errors import MicromotionError
from .models import ConstantDrive, HarmonicDrive, PiecewiseDrive, h_vector

__all__ = ["ConstantDrive", "HarmonicDrive", "MicromotionError", "PiecewiseDrive", "h_vector"]
