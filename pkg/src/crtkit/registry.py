"""Name-based resolution of predictive models and conditional samplers."""

from __future__ import annotations

import numpy as np

from crtkit.bridge import BridgeClient, external_conditional_sampler, external_y_model
from crtkit.core import CrtConfig, FeatureKind, derive_seed
from crtkit.crt import SamplerFactory, YModelFactory
from crtkit.dgp import DgpSpec, oracle_sampler
from crtkit.models import (
    fit_categorical_sampler,
    fit_knn_model,
    fit_linear_gaussian,
    fit_quantile_grid_sampler,
)

Y_MODEL_CHOICES = ("auto", "ols", "knn", "external")
SAMPLER_CHOICES = ("knn", "oracle", "external")

# Fit-time seed streams, distinct from the split/draw streams in crtkit.crt.
STREAM_FIT_Y = 2
STREAM_FIT_SAMPLER = 3


def resolve_y_model(
    name: str, config: CrtConfig, bridge: BridgeClient | None = None
) -> YModelFactory:
    if name == "ols":
        return fit_linear_gaussian
    if name == "knn":
        return fit_knn_model
    if name == "auto":

        def auto(x: np.ndarray, y: np.ndarray, kind: FeatureKind):
            if kind.is_categorical:
                return fit_knn_model(x, y, kind)
            return fit_linear_gaussian(x, y, kind)

        return auto
    if name == "external":
        if bridge is None:
            raise ValueError("external y-model requires a bridge worker")
        seed = derive_seed(config.master_seed, [STREAM_FIT_Y])
        return lambda x, y, kind: external_y_model(bridge, x, y, kind, seed)
    raise ValueError(f"unknown y-model {name!r}; choices: {', '.join(Y_MODEL_CHOICES)}")


def resolve_sampler(
    name: str,
    config: CrtConfig,
    dgp_spec: DgpSpec | None = None,
    bridge: BridgeClient | None = None,
) -> SamplerFactory:
    grid_size = config.quantile_grid_size
    if name == "knn":

        def knn(x_minus: np.ndarray, values: np.ndarray, kind: FeatureKind, j: int):
            if kind.is_categorical:
                return fit_categorical_sampler(x_minus, values, kind)
            return fit_quantile_grid_sampler(x_minus, values, kind, grid_size)

        return knn
    if name == "oracle":
        if dgp_spec is None:
            raise ValueError("oracle sampler requires the ground-truth sidecar")
        return lambda x_minus, values, kind, j: oracle_sampler(dgp_spec, j)
    if name == "external":
        if bridge is None:
            raise ValueError("external sampler requires a bridge worker")

        def external(x_minus: np.ndarray, values: np.ndarray, kind: FeatureKind, j: int):
            seed = derive_seed(config.master_seed, [STREAM_FIT_SAMPLER, j])
            return external_conditional_sampler(
                bridge, x_minus, values, kind, grid_size, seed
            )

        return external
    raise ValueError(f"unknown sampler {name!r}; choices: {', '.join(SAMPLER_CHOICES)}")
