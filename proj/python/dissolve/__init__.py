"""Constraint dissolving penalty methods: projected-gradient solvers over convex sets."""

from ._core import (
    CapabilityError,
    ConvexSet,
    DomainError,
    InvalidInput,
    NumericalError,
    Problem,
    __version__,
    assumption_a_check,
    gen_fpca,
    gen_npca,
    gen_qpb,
    grad_check,
    q_mapping_check,
    run_cli,
    set_warnings_enabled,
    solve,
)

__all__ = [
    "CapabilityError",
    "ConvexSet",
    "DomainError",
    "InvalidInput",
    "NumericalError",
    "Problem",
    "__version__",
    "assumption_a_check",
    "gen_fpca",
    "gen_npca",
    "gen_qpb",
    "grad_check",
    "q_mapping_check",
    "run_cli",
    "set_warnings_enabled",
    "solve",
]
