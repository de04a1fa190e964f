"""Predictive models for p(y|x) and conditional samplers for p(X_j | X_-j).

Two built-in families cover the self-contained build: an OLS-Gaussian
predictive model and k-nearest-neighbour estimators (Gaussian predictive,
Laplace-smoothed class probabilities, empirical conditional quantiles).
External models plug in through crtkit.bridge with the same interfaces.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from crtkit import kernels
from crtkit.core import CONTINUOUS, FeatureKind

OLS_VARIANCE_FLOOR = 1e-12
KNN_VARIANCE_FLOOR = 1e-6
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


class PredictiveModel(ABC):
    """Fitted model returning per-row log predictive densities (nats)."""

    @abstractmethod
    def log_density(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Log density of each target value given its feature row."""


class ConditionalSampler(ABC):
    """Fitted sampler for one feature column given the remaining columns."""

    @property
    @abstractmethod
    def kind(self) -> FeatureKind:
        """Kind of the column this sampler draws."""

    @abstractmethod
    def sample_matrix(self, x_minus: np.ndarray, seeds: np.ndarray) -> np.ndarray:
        """Draw values for rows x_minus (m, p-1) under a (B, m) seed grid."""

    def sample(self, x_minus_j: np.ndarray, seed: int) -> float:
        """Draw a single value for one row; deterministic in (row, seed)."""
        row = np.asarray(x_minus_j, dtype=np.float64).reshape(1, -1)
        seeds = np.asarray([[seed]], dtype=np.uint64)
        return float(self.sample_matrix(row, seeds)[0, 0])


@dataclass(frozen=True)
class QuantileGrid:
    """Per-row predicted quantiles at midpoint levels (k - 0.5)/K."""

    values: np.ndarray  # (m, K), nondecreasing along axis 1

    def __post_init__(self) -> None:
        values = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64))
        if values.ndim != 2 or values.shape[1] < 2:
            raise ValueError("values must be (m, K) with K >= 2")
        if not np.isfinite(values).all():
            raise ValueError("quantile values must be finite")
        if (np.diff(values, axis=1) < 0).any():
            raise ValueError("quantile rows must be nondecreasing; clamp first")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def grid_size(self) -> int:
        return self.values.shape[1]

    @property
    def levels(self) -> np.ndarray:
        return quantile_levels(self.grid_size)

    @classmethod
    def from_predictions(cls, values: np.ndarray) -> "QuantileGrid":
        """Build a grid from raw predictions, repairing quantile crossings."""
        return cls(isotonic_clamp(np.asarray(values, dtype=np.float64)))


def quantile_levels(grid_size: int) -> np.ndarray:
    """Midpoint quantile levels (k - 0.5)/K for k = 1..K."""
    if grid_size < 2:
        raise ValueError("grid_size must be >= 2")
    return (np.arange(1, grid_size + 1) - 0.5) / grid_size


def isotonic_clamp(values: np.ndarray) -> np.ndarray:
    """Repair quantile crossings with a running maximum along the last axis."""
    return np.maximum.accumulate(values, axis=-1)


def sample_from_grid(grid: QuantileGrid, seeds: np.ndarray) -> np.ndarray:
    """Uniformly pick one grid level per (draw, row); discretized inverse CDF."""
    return kernels.grid_lookup(grid.values, kernels.uniforms(seeds))


def sample_categorical(probs: np.ndarray, seeds: np.ndarray) -> np.ndarray:
    """Inverse-CDF draws from per-row probability vectors (m, L)."""
    cum = np.cumsum(np.asarray(probs, dtype=np.float64), axis=1)
    return kernels.categorical_lookup(cum, kernels.uniforms(seeds))


# ---------------------------------------------------------------------------
# OLS-Gaussian predictive model


class LinearGaussianModel(PredictiveModel):
    def __init__(self, beta: np.ndarray, sigma2: float):
        self._beta = beta
        self._sigma2 = sigma2

    @property
    def sigma2(self) -> float:
        return self._sigma2

    def log_density(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        mu = self._beta[0] + x @ self._beta[1:]
        return (
            -_HALF_LOG_2PI
            - 0.5 * math.log(self._sigma2)
            - (y - mu) ** 2 / (2.0 * self._sigma2)
        )


def fit_linear_gaussian(
    x: np.ndarray, y: np.ndarray, target_kind: FeatureKind = CONTINUOUS
) -> LinearGaussianModel:
    """OLS mean with intercept, Gaussian predictive with floored variance.

    Falls back to a lightly ridged solve when the design is rank-deficient.
    """
    if target_kind.is_categorical:
        raise ValueError("linear-Gaussian model requires a continuous target")
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, p = x.shape
    if n < p + 2:
        raise ValueError(f"need at least p+2={p + 2} training rows, got {n}")
    design = np.column_stack([np.ones(n), x])
    beta, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    if rank < p + 1:
        penalty = 1e-6 * float(np.trace(x.T @ x)) / p
        if penalty <= 0.0:
            penalty = 1e-12
        gram = design.T @ design + penalty * np.eye(p + 1)
        gram[0, 0] -= penalty  # leave the intercept unpenalized
        beta = np.linalg.solve(gram, design.T @ y)
    resid = y - design @ beta
    sigma2 = max(float(resid @ resid) / (n - p - 1), OLS_VARIANCE_FLOOR)
    return LinearGaussianModel(beta, sigma2)


# ---------------------------------------------------------------------------
# k-NN estimators


def default_neighbors(n_train: int) -> int:
    return int(math.ceil(math.sqrt(n_train)))


class _ZScorer:
    """Feature standardization frozen at fit time (train statistics only)."""

    def __init__(self, x: np.ndarray):
        self._mean = x.mean(axis=0)
        sd = x.std(axis=0)
        sd[sd == 0.0] = 1.0
        self._sd = sd

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self._mean) / self._sd


def _neighbor_indices(train_z: np.ndarray, query_z: np.ndarray, k: int) -> np.ndarray:
    # (m, k) indices of the k nearest train rows per query row. Stable sort
    # keeps tie-breaking deterministic; broadcasting keeps per-row sums
    # independent of the batch size.
    d2 = ((query_z[:, None, :] - train_z[None, :, :]) ** 2).sum(axis=2)
    return np.argsort(d2, axis=1, kind="stable")[:, :k]


class KnnRegressionModel(PredictiveModel):
    """Gaussian predictive from the local mean/variance of k neighbours."""

    def __init__(self, x: np.ndarray, y: np.ndarray, k: int):
        self._scale = _ZScorer(x)
        self._train_z = self._scale(x)
        self._y = np.asarray(y, dtype=np.float64)
        self._k = k

    def log_density(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        neigh = self._y[_neighbor_indices(self._train_z, self._scale(x), self._k)]
        mu = neigh.mean(axis=1)
        var = np.maximum(neigh.var(axis=1), KNN_VARIANCE_FLOOR)
        y = np.asarray(y, dtype=np.float64)
        return -_HALF_LOG_2PI - 0.5 * np.log(var) - (y - mu) ** 2 / (2.0 * var)


class KnnClassifierModel(PredictiveModel):
    """Laplace-smoothed class probabilities from the k nearest neighbours."""

    def __init__(self, x: np.ndarray, y: np.ndarray, levels: int, k: int):
        self._scale = _ZScorer(x)
        self._train_z = self._scale(x)
        self._labels = np.asarray(y, dtype=np.int64)
        self._levels = levels
        self._k = k

    def class_probs(self, x: np.ndarray) -> np.ndarray:
        idx = _neighbor_indices(self._train_z, self._scale(x), self._k)
        neigh = self._labels[idx]
        counts = np.stack(
            [(neigh == level).sum(axis=1) for level in range(self._levels)], axis=1
        )
        return (counts + 1.0) / (self._k + self._levels)

    def log_density(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        probs = self.class_probs(x)
        labels = np.asarray(y, dtype=np.int64)
        if labels.min() < 0 or labels.max() >= self._levels:
            raise ValueError("target level out of range")
        return np.log(probs[np.arange(len(labels)), labels])


def fit_knn_model(
    x: np.ndarray,
    y: np.ndarray,
    target_kind: FeatureKind = CONTINUOUS,
    k: int | None = None,
) -> PredictiveModel:
    """k-NN predictive model; Gaussian for continuous targets, categorical otherwise."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = x.shape[0]
    if k is None:
        k = default_neighbors(n)
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    if target_kind.is_categorical:
        return KnnClassifierModel(x, y, target_kind.levels, k)
    return KnnRegressionModel(x, y, k)


class KnnQuantileSampler(ConditionalSampler):
    """Conditional sampler from k-NN empirical quantiles of the target column."""

    def __init__(self, x_minus: np.ndarray, values: np.ndarray, grid_size: int, k: int):
        self._scale = _ZScorer(x_minus)
        self._train_z = self._scale(x_minus)
        self._values = np.asarray(values, dtype=np.float64)
        self._grid_size = grid_size
        self._k = k

    @property
    def kind(self) -> FeatureKind:
        return CONTINUOUS

    def grid(self, x_minus: np.ndarray) -> QuantileGrid:
        """Predicted quantile grid for each query row."""
        idx = _neighbor_indices(self._train_z, self._scale(x_minus), self._k)
        neigh = self._values[idx]
        levels = quantile_levels(self._grid_size)
        raw = np.quantile(neigh, levels, axis=1).T
        return QuantileGrid.from_predictions(raw)

    def sample_matrix(self, x_minus: np.ndarray, seeds: np.ndarray) -> np.ndarray:
        return sample_from_grid(self.grid(x_minus), seeds)


def fit_quantile_grid_sampler(
    x_minus: np.ndarray,
    values: np.ndarray,
    kind: FeatureKind = CONTINUOUS,
    grid_size: int = 200,
    k: int | None = None,
) -> KnnQuantileSampler:
    """Quantile-grid sampler for a continuous column."""
    if kind.is_categorical:
        raise ValueError("column is categorical; use fit_categorical_sampler")
    if grid_size < 2:
        raise ValueError("grid_size must be >= 2")
    x_minus = np.asarray(x_minus, dtype=np.float64)
    n = x_minus.shape[0]
    if k is None:
        k = default_neighbors(n)
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    return KnnQuantileSampler(x_minus, values, grid_size, k)


class KnnCategoricalSampler(ConditionalSampler):
    """Conditional sampler from k-NN Laplace-smoothed class probabilities."""

    def __init__(self, x_minus: np.ndarray, values: np.ndarray, levels: int, k: int):
        self._model = KnnClassifierModel(x_minus, values, levels, k)
        self._levels = levels

    @property
    def kind(self) -> FeatureKind:
        return FeatureKind.categorical(self._levels)

    def class_probs(self, x_minus: np.ndarray) -> np.ndarray:
        return self._model.class_probs(x_minus)

    def sample_matrix(self, x_minus: np.ndarray, seeds: np.ndarray) -> np.ndarray:
        return sample_categorical(self.class_probs(x_minus), seeds)


def fit_categorical_sampler(
    x_minus: np.ndarray,
    values: np.ndarray,
    kind: FeatureKind,
    k: int | None = None,
) -> KnnCategoricalSampler:
    """Class-probability sampler for a categorical column."""
    if not kind.is_categorical:
        raise ValueError("column is continuous; use fit_quantile_grid_sampler")
    x_minus = np.asarray(x_minus, dtype=np.float64)
    n = x_minus.shape[0]
    if k is None:
        k = default_neighbors(n)
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    return KnnCategoricalSampler(x_minus, values, kind.levels, k)
