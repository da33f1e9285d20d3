"""Linear programming back ends for the deterministic counterparts."""

from .program import (
    IterationLimitError,
    LinearProgram,
    LPSolution,
    Status,
    read_mps,
    write_mps,
)
from .simplex import solve_simplex
from .solve import solve_external, solve_lp, solve_with_binaries

__all__ = [
    "IterationLimitError",
    "LinearProgram",
    "LPSolution",
    "Status",
    "read_mps",
    "write_mps",
    "solve_simplex",
    "solve_external",
    "solve_lp",
    "solve_with_binaries",
]
