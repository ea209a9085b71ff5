"""Numerical laboratory for eigenvalue branches of degenerating warped products."""

from .profiles import ExponentData, classify, describe, make_sqrt_profile, profile_from_id
from .operator import Boundary, GridPolicy, SectorProblem, WarpedFamily, assemble
from .eigen import eigenpairs_by_index, lowest_eigenpairs, sturm_count
from .tracker import EigenBranch, TrackOptions, hellmann_feynman, track

__all__ = [
    "Boundary", "EigenBranch", "ExponentData", "GridPolicy", "SectorProblem", "TrackOptions",
    "WarpedFamily", "assemble", "classify", "describe", "eigenpairs_by_index", "hellmann_feynman",
    "lowest_eigenpairs", "make_sqrt_profile", "profile_from_id", "sturm_count", "track",
]
