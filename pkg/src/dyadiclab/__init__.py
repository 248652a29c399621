"""Dyadic model operators in two parameters: grids, Haar calculus, function
spaces, shifts and paraproducts, commutator identities, random-grid
square functions and an experiment harness."""

from .geometry import Cube, GridSpec, Rectangle, shifted_grid, standard_grid
from .haar import GridFunction, HaarSymbol, Mesh
from .scalar import EXACT, FLOAT, ExactArray, QSqrt2
from .spaces import ExponentTriple, Weight
from .operators import (CancellationPattern, FullParaproductSpec, PartialParaproductSpec, ShiftSpec,
                        random_admissible_spec)
from .commutators import (BilinearOperator, commutator, commutator_adjoint_residuals, iterated_commutator,
                          telescoping_check)
from .randomized import GridEnsemble, randomized_square_function, build_exceptional_sets, rwt_experiment
from .normlab import estimate_operator_norm, complexity_scan, run_suite

__version__ = "0.1.0"

__all__ = [
    "Cube", "GridSpec", "Rectangle", "shifted_grid", "standard_grid",
    "GridFunction", "HaarSymbol", "Mesh",
    "EXACT", "FLOAT", "ExactArray", "QSqrt2",
    "ExponentTriple", "Weight",
    "CancellationPattern", "FullParaproductSpec", "PartialParaproductSpec", "ShiftSpec", "random_admissible_spec",
    "BilinearOperator", "commutator", "commutator_adjoint_residuals", "iterated_commutator", "telescoping_check",
    "GridEnsemble", "randomized_square_function", "build_exceptional_sets", "rwt_experiment",
    "estimate_operator_norm", "complexity_scan", "run_suite",
]
