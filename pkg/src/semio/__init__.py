"""Matrix-free spectral-element Poisson solver with an I/O and flop ledger."""

__version__ = "0.1.0"

from .basis import SpectralBasis, build_basis
from .gather import GsMap, build_gsmap, dot3, gather_scatter, mask_dirichlet
from .iomodel import MachineSpec, ProblemSpec, cost_report, model_machine_defaults, reconcile
from .ledger import Ledger
from .mesh import DofMap, HexMesh, box_mesh, build_dofmap, deform_affine
from .operator import GeomFactors, apply_local_remat, apply_local_stored, geometric_factors
from .solver import SemSystem, SolveStats, assemble_rhs, cg_solve

__all__ = [
    "SpectralBasis", "build_basis", "GsMap", "build_gsmap", "dot3", "gather_scatter",
    "mask_dirichlet", "MachineSpec", "ProblemSpec", "cost_report", "model_machine_defaults",
    "reconcile", "Ledger", "DofMap", "HexMesh", "box_mesh", "build_dofmap", "deform_affine",
    "GeomFactors", "apply_local_remat", "apply_local_stored", "geometric_factors",
    "SemSystem", "SolveStats", "assemble_rhs", "cg_solve",
]
