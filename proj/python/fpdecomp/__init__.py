"""Python access to the fpdecomp C++ core."""

from ._core import (
    DiffusionModel,
    Error,
    Expr,
    __version__,
    balance,
    classify_linear_fixed_point,
    decompose_grid,
    decompose_linear,
    linear_model,
    load_model,
    model_from_json,
    parse_expression,
    quasi_potential,
    run_cli,
    simulate,
    solve_lyapunov,
)

__all__ = [
    "DiffusionModel",
    "Error",
    "Expr",
    "__version__",
    "balance",
    "classify_linear_fixed_point",
    "decompose_grid",
    "decompose_linear",
    "linear_model",
    "load_model",
    "model_from_json",
    "parse_expression",
    "quasi_potential",
    "run_cli",
    "simulate",
    "solve_lyapunov",
]
