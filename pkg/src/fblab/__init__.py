"""Free-boundary laboratory on the half disk.

Finite-difference obstacle-type solvers for fully nonlinear uniformly
elliptic operators, with blow-up classification, free-boundary geometry,
and second-derivative regularity diagnostics.
"""

__version__ = "0.1.0"

from ._kernels import BACKEND  # noqa: E402
from .grid import HalfDiskGrid, ScalarField, dump_field, load_field  # noqa: E402
from .operators import (EllipticityBounds, EllipticOperator, XDependence,  # noqa: E402
                        check_structure, evaluate, linearize, load_operator,
                        operator_from_dict, operator_to_dict, pucci_minus,
                        pucci_plus)
from .solver import (ActiveSet, InconsistentDatumError, SolverConfig,  # noqa: E402
                     SolveReport, solve_dirichlet, solve_nosign, solve_obstacle)

__all__ = [
    "__version__",
    "BACKEND",
    "HalfDiskGrid",
    "ScalarField",
    "dump_field",
    "load_field",
    "EllipticityBounds",
    "EllipticOperator",
    "XDependence",
    "check_structure",
    "evaluate",
    "linearize",
    "load_operator",
    "operator_from_dict",
    "operator_to_dict",
    "pucci_plus",
    "pucci_minus",
    "ActiveSet",
    "InconsistentDatumError",
    "SolverConfig",
    "SolveReport",
    "solve_dirichlet",
    "solve_obstacle",
    "solve_nosign",
]
