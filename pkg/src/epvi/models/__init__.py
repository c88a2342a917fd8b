"""Model plugins: tempered log-joints with analytic gradients and Hessian diagonals."""

from __future__ import annotations

import dataclasses

import numpy as np

from .base import DataShard, DataValidationError, ModelSpec
from .gaussian import GaussianToy, GaussianToyConfig, gaussian_toy, generate_gaussian
from .logistic import LogisticModel, LogisticModelConfig, generate_logistic, logistic_model
from .tlsa import TlsaModel, TlsaModelConfig, generate_tlsa, grid_locations, tlsa_model

FAMILIES = {
    "gaussian": (GaussianToyConfig, GaussianToy, generate_gaussian),
    "logistic": (LogisticModelConfig, LogisticModel, generate_logistic),
    "tlsa": (TlsaModelConfig, TlsaModel, generate_tlsa),
}


def make_config(family: str, **kwargs):
    config_cls = FAMILIES[family][0]
    names = {f.name for f in dataclasses.fields(config_cls)}
    return config_cls(**{k: v for k, v in kwargs.items() if k in names and v is not None})


def build_model(family: str, config, shard: DataShard, prior_temper: float = 1.0) -> ModelSpec:
    try:
        model_cls = FAMILIES[family][1]
    except KeyError:
        raise ValueError(f"unknown model family {family!r}") from None
    return model_cls(config, shard, prior_temper)


def generate_synthetic(family: str, config, N: int, seed: int):
    """Draw ``N`` rows from the family's generative process.

    Returns ``(DataShard, truth)`` where ``truth`` is a JSON-ready dict.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    return FAMILIES[family][2](config, N, seed)


def holdout_split(data: DataShard, fraction: float = 0.1, seed: int = 0) -> tuple[DataShard, DataShard]:
    """Random train/test split reserving ``round(fraction * N)`` rows for testing."""
    rng = np.random.default_rng(seed)
    perm = rng.permutation(data.n)
    n_test = int(round(fraction * data.n))
    return data.take(np.sort(perm[n_test:])), data.take(np.sort(perm[:n_test]))


__all__ = [
    "DataShard",
    "DataValidationError",
    "FAMILIES",
    "GaussianToy",
    "GaussianToyConfig",
    "LogisticModel",
    "LogisticModelConfig",
    "ModelSpec",
    "TlsaModel",
    "TlsaModelConfig",
    "build_model",
    "gaussian_toy",
    "generate_synthetic",
    "grid_locations",
    "holdout_split",
    "logistic_model",
    "make_config",
    "tlsa_model",
]
