"""Spectral element solver for incompressible MHD in periodic rectangular ducts."""

__version__ = "0.1.0"

from .gll import gll_basis
from .mesh import build_box_mesh, boundary_masks
from .operators import Discretization
from .stepper import MhdSolver, PhysicalParams
from .cases import CaseSpec, make_case

__all__ = [
    "gll_basis", "build_box_mesh", "boundary_masks", "Discretization", "MhdSolver",
    "PhysicalParams", "CaseSpec", "make_case", "__version__",
]
