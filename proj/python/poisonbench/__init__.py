"""Poisoning attacks (Nopt, Opt) and subset defenses (Proda, TRIM) for linear regression."""

from ._core import (
    AttackError,
    DataError,
    DefenseError,
    Model,
    compute_beta,
    dispersion_objective,
    estimate_complexity,
    fit,
    generate_synthetic,
    loss,
    mse,
    nopt_attack,
    opt_attack,
    proda_defend,
    retained_count,
    split_three,
    trim_defend,
)

__all__ = [
    "AttackError",
    "DataError",
    "DefenseError",
    "Model",
    "compute_beta",
    "dispersion_objective",
    "estimate_complexity",
    "fit",
    "generate_synthetic",
    "loss",
    "mse",
    "nopt_attack",
    "opt_attack",
    "proda_defend",
    "retained_count",
    "split_three",
    "trim_defend",
]
