"""Mean-variance-skewness-kurtosis portfolio selection by DC programming."""

from .dca import (ALGORITHMS, SolveResult, SolverConfig, Status, StopMode, bdca_solve,
                  dca_solve, kkt_residual, random_x0, ubdca_solve, udca_solve)
from .dcsos import DcPair, UniversalPair, assemble_G_H, compute_eta, universal_pair
from .frontier import FrontierPoint, FrontierSpec, InvestorKind, generate_frontier, sample_preference
from .moments import (MomentTensors, ReturnMatrix, estimate_moments, portfolio_moments,
                      read_returns_csv, write_returns_csv)
from .poly import PROFILES, Preference, SparsePolynomial, build_objective
from .subsolvers import FeasibleSet, project_simplex, project_simplex_with_return

__all__ = [
    "ALGORITHMS", "SolveResult", "SolverConfig", "Status", "StopMode", "bdca_solve", "dca_solve",
    "kkt_residual", "random_x0", "ubdca_solve", "udca_solve", "DcPair", "UniversalPair",
    "assemble_G_H", "compute_eta", "universal_pair", "FrontierPoint", "FrontierSpec",
    "InvestorKind", "generate_frontier", "sample_preference", "MomentTensors", "ReturnMatrix",
    "estimate_moments", "portfolio_moments", "read_returns_csv", "write_returns_csv",
    "PROFILES", "Preference", "SparsePolynomial", "build_objective", "FeasibleSet",
    "project_simplex", "project_simplex_with_return",
]
