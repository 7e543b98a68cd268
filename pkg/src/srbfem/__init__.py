"""Finite elements for a reservoir coupled to thin wells, with and without singularity removal."""
from .coupling import AssemblyParams, BlockSystem, Well, assemble_srb_system, assemble_standard_system
from .experiment import ConfigError, RunConfig, load_config, run_experiment
from .geometry import LineMesh1D, TetMesh3D, WellSegment, build_box_mesh, build_line_mesh
from .peaceman import PeacemanParams, peaceman_flux_coefficient, srb_equivalent_coefficient
from .singular import CutoffFunction, ExtensionOperator, SingularField, eval_G, eval_gradG
from .solver import SolverConfig, solve
from .testcases import make_case, validate_manufactured

__version__ = "0.1.0"

__all__ = [
    "AssemblyParams", "BlockSystem", "ConfigError", "CutoffFunction", "ExtensionOperator", "LineMesh1D",
    "PeacemanParams", "RunConfig", "SingularField", "SolverConfig", "TetMesh3D", "Well", "WellSegment",
    "assemble_srb_system", "assemble_standard_system", "build_box_mesh", "build_line_mesh", "eval_G",
    "eval_gradG", "load_config", "make_case", "peaceman_flux_coefficient", "run_experiment", "solve",
    "srb_equivalent_coefficient", "validate_manufactured",
]
