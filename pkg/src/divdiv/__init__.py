"""Mixed finite elements in H(div div; S) with k = 3 for the clamped plate."""

from .analysis import ErrorBundle, error_norms, postprocess, project_Qh, seminorm_2h
from .assembly import SparseSystem, assemble_system
from .complex_check import build_vh_basis, check_complex, sym_curl_to_sigma
from .dofmap import DofMap, build_sigma_map, build_u_map
from .mesh import Mesh, MeshError, build_lshape, build_unit_square, perturb, refine_red
from .problems import PROBLEMS, Manufactured, example1, example2, example3
from .ref_basis import ElementGeometry, LocalBasis, correct_basis, vandermonde_oracle
from .solver import SaddleSolution, SolverError, estimate_infsup, solve
from .study import ConvergenceReport, RunConfig, run_checks, run_convergence

__all__ = [
    "ConvergenceReport",
    "DofMap",
    "ElementGeometry",
    "ErrorBundle",
    "LocalBasis",
    "Manufactured",
    "Mesh",
    "MeshError",
    "PROBLEMS",
    "RunConfig",
    "SaddleSolution",
    "SolverError",
    "SparseSystem",
    "assemble_system",
    "build_lshape",
    "build_sigma_map",
    "build_u_map",
    "build_unit_square",
    "build_vh_basis",
    "check_complex",
    "correct_basis",
    "error_norms",
    "estimate_infsup",
    "example1",
    "example2",
    "example3",
    "perturb",
    "postprocess",
    "project_Qh",
    "refine_red",
    "run_checks",
    "run_convergence",
    "seminorm_2h",
    "solve",
    "sym_curl_to_sigma",
    "vandermonde_oracle",
]

__version__ = "0.1.0"
