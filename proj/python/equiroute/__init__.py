"""Budget-constrained model routing: tables, oracle rule, routers and metrics."""

from ._equiroute import (
    NumericsError,
    RoutingTable,
    ValidationError,
    evaluate,
    generate_synthetic,
    load_table,
    make_split,
    margin,
    mc_selection_frequencies,
    nauc,
    noise_sensitivity,
    oracle_select,
    pipeline,
    qnc,
    ranking_loss,
    rci,
    run_cli,
    select_model,
)

__all__ = [
    "NumericsError",
    "RoutingTable",
    "ValidationError",
    "evaluate",
    "generate_synthetic",
    "load_table",
    "make_split",
    "margin",
    "mc_selection_frequencies",
    "nauc",
    "noise_sensitivity",
    "oracle_select",
    "pipeline",
    "qnc",
    "ranking_loss",
    "rci",
    "run_cli",
    "select_model",
]
