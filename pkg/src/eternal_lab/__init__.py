"""Positive eternal solutions of linear parabolic equations on bounded domains.

The package discretises ``u_t - a_ij D_ij u + b_i D_i u + c u = f`` on a
cylinder with zero lateral data, constructs the positive solution that exists
for all time, and measures the decay, comparison and proportionality
properties such solutions enjoy.
"""

from .domain import CylinderWindow, Grid, SpatialDomain, build_grid
from .errors import EternalLabError
from .eternal import (
    EternalSolution,
    eigenpair_solution,
    far_past,
    floquet_principal,
    principal_eigenpair,
)
from .evolution import EvolutionTrace, FieldSlice, evolve, profile_checks, step, sup_profile
from .operator import CoefficientSpec, SourceSpec, assemble, heat_spec, make_spec, slab_norm, sliding_norm, validate

__version__ = "0.1.0"

__all__ = [
    "CoefficientSpec",
    "CylinderWindow",
    "EternalLabError",
    "EternalSolution",
    "EvolutionTrace",
    "FieldSlice",
    "Grid",
    "SourceSpec",
    "SpatialDomain",
    "assemble",
    "build_grid",
    "eigenpair_solution",
    "evolve",
    "far_past",
    "floquet_principal",
    "heat_spec",
    "make_spec",
    "principal_eigenpair",
    "profile_checks",
    "slab_norm",
    "sliding_norm",
    "step",
    "sup_profile",
    "validate",
]
