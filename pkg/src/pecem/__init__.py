"""Constraint energy minimizing multiscale solvers for linear poroelasticity.

Fine-scale P1 reference, CEM-GMsFEM displacement and pressure spaces, an
explicitly treated second pressure space, and a partially explicit time
splitting with its stability diagnostics.
"""
from .assembly import assemble_forms, assemble_load
from .cem import build_auxiliary, build_cem_basis, project_pi
from .coeff import CoefficientField, PhysicsConstants, generate_streak_field, load_raster
from .config import ExperimentConfig, preset
from .fine import TimeGrid, run_fine
from .grid import build_grid_pair
from .msstep import reduce, run_implicit, run_split
from .qh2 import build_qh2_aux, build_qh2_basis, stability_report

__all__ = [
    "assemble_forms", "assemble_load", "build_auxiliary", "build_cem_basis", "project_pi",
    "CoefficientField", "PhysicsConstants", "generate_streak_field", "load_raster",
    "ExperimentConfig", "preset", "TimeGrid", "run_fine", "build_grid_pair", "reduce",
    "run_implicit", "run_split", "build_qh2_aux", "build_qh2_basis", "stability_report",
]
