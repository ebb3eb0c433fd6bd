"""Adversarial training, white-box attacks and test-time purification."""

from ._tpap import (
    CheckpointError,
    DataError,
    Model,
    ShapeError,
    TpapError,
    ValidationError,
    cross_entropy,
    fgsm,
    make_blobs,
    pgd,
    purify,
    run_cli,
    tpap_predict,
)

__all__ = [
    "CheckpointError",
    "DataError",
    "Model",
    "ShapeError",
    "TpapError",
    "ValidationError",
    "cross_entropy",
    "fgsm",
    "make_blobs",
    "pgd",
    "purify",
    "run_cli",
    "tpap_predict",
]
