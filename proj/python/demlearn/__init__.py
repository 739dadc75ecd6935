from ._core import (
    ConfigError,
    ModelSpec,
    agglomerate,
    init_params,
    loss,
    predict,
    prox_grad,
    run_plan,
    simulate,
    synthetic_dataset,
    truncate,
)

__all__ = [
    "ConfigError",
    "ModelSpec",
    "agglomerate",
    "init_params",
    "loss",
    "predict",
    "prox_grad",
    "run_plan",
    "simulate",
    "synthetic_dataset",
    "truncate",
]
