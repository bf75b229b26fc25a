"""Mutual information of ergodic block-Jacobi wireless channels."""

from .channels import ModelConfig, build_model
from .estimators import (
    MiEstimate,
    kappa_estimate,
    naive_mi,
    recursive_mi,
    spectral_mi,
)
from .rmt import mp_closed_form, ring_mi

__version__ = "0.1.0"

__all__ = [
    "ModelConfig",
    "build_model",
    "MiEstimate",
    "recursive_mi",
    "naive_mi",
    "spectral_mi",
    "kappa_estimate",
    "mp_closed_form",
    "ring_mi",
]
