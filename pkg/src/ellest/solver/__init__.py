from .cones import ConeDims
from .ipm import EngineResult, conelp
from .program import (
    Builder,
    ConicProgram,
    ConicSolution,
    SolverError,
    lmi_min_eig,
    set_program_dump,
    solve,
    solve_or_raise,
)

__all__ = [
    "Builder",
    "ConeDims",
    "ConicProgram",
    "ConicSolution",
    "EngineResult",
    "SolverError",
    "conelp",
    "lmi_min_eig",
    "set_program_dump",
    "solve",
    "solve_or_raise",
]
