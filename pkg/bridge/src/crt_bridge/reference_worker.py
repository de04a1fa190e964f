"""Reference worker: linear-Gaussian and k-NN backends, fully deterministic.

Regression density and conditional quantiles come from ordinary least
squares with a Gaussian predictive; classification and categorical
conditionals come from Laplace-smoothed k-NN counts. Identical request
transcripts always produce identical response transcripts, which is what
the conformance suite pins.
"""

from __future__ import annotations

import math
import sys
from statistics import NormalDist
from typing import Any

import numpy as np

from crt_bridge.protocol import (
    BADREQUEST,
    BADSHAPE,
    NOTFOUND,
    NUMERIC,
    WorkerError,
)
from crt_bridge.worker import serve

_VARIANCE_FLOOR = 1e-12
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
_STANDARD_NORMAL = NormalDist()


def _as_matrix(obj: Any, what: str) -> np.ndarray:
    try:
        arr = np.asarray(obj, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise WorkerError(BADSHAPE, f"{what}: not a rectangular matrix") from exc
    if arr.ndim == 1 and arr.size == 0:
        arr = arr.reshape(0, 0)  # an empty row set arrives as []
    if arr.ndim != 2:
        raise WorkerError(BADSHAPE, f"{what}: expected a matrix, got ndim={arr.ndim}")
    if arr.size and not np.isfinite(arr).all():
        raise WorkerError(BADSHAPE, f"{what}: non-finite entries")
    return arr


def _as_vector(obj: Any, what: str) -> np.ndarray:
    try:
        arr = np.asarray(obj, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise WorkerError(BADSHAPE, f"{what}: not a numeric vector") from exc
    if arr.ndim != 1:
        raise WorkerError(BADSHAPE, f"{what}: expected a vector, got ndim={arr.ndim}")
    if arr.size and not np.isfinite(arr).all():
        raise WorkerError(BADSHAPE, f"{what}: non-finite entries")
    return arr


def _kind(payload_kind: Any) -> tuple[bool, int]:
    if not isinstance(payload_kind, dict):
        raise WorkerError(BADREQUEST, "kind must be an object")
    if payload_kind.get("kind") == "continuous":
        return False, 0
    if payload_kind.get("kind") == "categorical":
        levels = int(payload_kind.get("levels", 0))
        if levels < 2:
            raise WorkerError(BADREQUEST, "categorical kind needs levels >= 2")
        return True, levels
    raise WorkerError(BADREQUEST, f"bad kind {payload_kind!r}")


class _OlsGaussian:
    """OLS mean with intercept; Gaussian predictive with floored variance."""

    def __init__(self, x: np.ndarray, y: np.ndarray):
        n, p = x.shape
        if n < p + 2:
            raise WorkerError(BADSHAPE, f"need at least {p + 2} rows to fit, got {n}")
        design = np.column_stack([np.ones(n), x])
        beta, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
        if rank < p + 1:
            penalty = max(1e-6 * float(np.trace(x.T @ x)) / max(p, 1), 1e-12)
            gram = design.T @ design + penalty * np.eye(p + 1)
            gram[0, 0] -= penalty
            beta = np.linalg.solve(gram, design.T @ y)
        self.n_features = p
        self.beta = beta
        resid = y - design @ beta
        self.sigma2 = max(float(resid @ resid) / (n - p - 1), _VARIANCE_FLOOR)
        self.sigma = math.sqrt(self.sigma2)

    def mean(self, x: np.ndarray) -> np.ndarray:
        return self.beta[0] + x @ self.beta[1:]

    def log_density(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        mu = self.mean(x)
        return (
            -_HALF_LOG_2PI - 0.5 * math.log(self.sigma2)
            - (y - mu) ** 2 / (2.0 * self.sigma2)
        )


class _KnnClassifier:
    """Laplace-smoothed class frequencies among the k nearest neighbours."""

    def __init__(self, x: np.ndarray, labels: np.ndarray, levels: int):
        if not np.array_equal(labels, np.floor(labels)):
            raise WorkerError(BADSHAPE, "categorical labels must be integers")
        if labels.size and (labels.min() < 0 or labels.max() >= levels):
            raise WorkerError(BADSHAPE, f"labels must lie in [0, {levels})")
        self.n_features = x.shape[1]
        self.levels = levels
        self.k = max(1, math.ceil(math.sqrt(x.shape[0])))
        self._mean = x.mean(axis=0)
        sd = x.std(axis=0)
        sd[sd == 0.0] = 1.0
        self._sd = sd
        self._train = (x - self._mean) / self._sd
        self._labels = labels.astype(np.int64)

    def probs(self, x: np.ndarray) -> np.ndarray:
        queries = (x - self._mean) / self._sd
        d2 = ((queries[:, None, :] - self._train[None, :, :]) ** 2).sum(axis=2)
        neighbors = self._labels[np.argsort(d2, axis=1, kind="stable")[:, : self.k]]
        counts = np.stack(
            [(neighbors == level).sum(axis=1) for level in range(self.levels)], axis=1
        )
        return (counts + 1.0) / (self.k + self.levels)

    def log_density(self, x: np.ndarray, labels: np.ndarray) -> np.ndarray:
        if not np.array_equal(labels, np.floor(labels)):
            raise WorkerError(BADSHAPE, "categorical labels must be integers")
        idx = labels.astype(np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= self.levels):
            raise WorkerError(BADSHAPE, f"labels must lie in [0, {self.levels})")
        probs = self.probs(x)
        return np.log(probs[np.arange(idx.size), idx])


class ReferenceBackend:
    def __init__(self) -> None:
        self._models: dict[str, Any] = {}
        self._counter = 0

    def _store(self, model: Any) -> dict[str, Any]:
        self._counter += 1
        model_id = f"m{self._counter}"
        self._models[model_id] = model
        return {"model_id": model_id}

    def _fetch(self, payload: dict[str, Any]) -> Any:
        model_id = payload.get("model_id")
        model = self._models.get(model_id)
        if model is None:
            raise WorkerError(NOTFOUND, f"unknown model_id {model_id!r}")
        return model

    def _fit(self, x: np.ndarray, values: np.ndarray, kind: Any) -> dict[str, Any]:
        if x.shape[0] != values.shape[0]:
            raise WorkerError(
                BADSHAPE, f"{x.shape[0]} rows against {values.shape[0]} target values"
            )
        categorical, levels = _kind(kind)
        if categorical:
            return self._store(_KnnClassifier(x, values, levels))
        return self._store(_OlsGaussian(x, values))

    # ---- protocol operations ----

    def fit_y(self, payload: dict[str, Any]) -> dict[str, Any]:
        x = _as_matrix(payload.get("X"), "X")
        y = _as_vector(payload.get("y"), "y")
        return self._fit(x, y, payload.get("y_kind", {"kind": "continuous"}))

    def fit_conditional(self, payload: dict[str, Any]) -> dict[str, Any]:
        x = _as_matrix(payload.get("X_minus_j"), "X_minus_j")
        values = _as_vector(payload.get("x_j"), "x_j")
        return self._fit(x, values, payload.get("kind", {"kind": "continuous"}))

    def log_density(self, payload: dict[str, Any]) -> dict[str, Any]:
        model = self._fetch(payload)
        x = _as_matrix(payload.get("X_eval"), "X_eval")
        y = _as_vector(payload.get("y_eval"), "y_eval")
        if x.shape[0] != y.shape[0]:
            raise WorkerError(BADSHAPE, "X_eval and y_eval row counts differ")
        if x.shape[0] == 0:
            return {"log_density": []}
        if x.shape[1] != model.n_features:
            raise WorkerError(
                BADSHAPE, f"expected {model.n_features} columns, got {x.shape[1]}"
            )
        out = model.log_density(x, y)
        if not np.isfinite(out).all():
            raise WorkerError(NUMERIC, "log density came out non-finite")
        return {"log_density": out.tolist()}

    def quantiles(self, payload: dict[str, Any]) -> dict[str, Any]:
        model = self._fetch(payload)
        if not isinstance(model, _OlsGaussian):
            raise WorkerError(BADREQUEST, "model does not predict conditional quantiles")
        x = _as_matrix(payload.get("X_minus_j_eval"), "X_minus_j_eval")
        levels = _as_vector(payload.get("levels"), "levels")
        if levels.size == 0 or levels.min() <= 0.0 or levels.max() >= 1.0:
            raise WorkerError(BADREQUEST, "levels must lie strictly inside (0, 1)")
        if (np.diff(levels) <= 0).any():
            raise WorkerError(BADREQUEST, "levels must increase strictly")
        if x.shape[1] != model.n_features:
            raise WorkerError(
                BADSHAPE, f"expected {model.n_features} columns, got {x.shape[1]}"
            )
        z = np.array([_STANDARD_NORMAL.inv_cdf(t) for t in levels.tolist()])
        values = model.mean(x)[:, None] + model.sigma * z[None, :]
        values = np.maximum.accumulate(values, axis=1)  # clamp, by contract
        if values.size and not np.isfinite(values).all():
            raise WorkerError(NUMERIC, "quantiles came out non-finite")
        return {"values": values.tolist()}

    def class_probs(self, payload: dict[str, Any]) -> dict[str, Any]:
        model = self._fetch(payload)
        if not isinstance(model, _KnnClassifier):
            raise WorkerError(BADREQUEST, "model does not predict class probabilities")
        x = _as_matrix(payload.get("X_minus_j_eval"), "X_minus_j_eval")
        if x.shape[1] != model.n_features:
            raise WorkerError(
                BADSHAPE, f"expected {model.n_features} columns, got {x.shape[1]}"
            )
        probs = model.probs(x)
        if not np.isfinite(probs).all() or np.abs(probs.sum(axis=1) - 1.0).max() > 1e-6:
            raise WorkerError(NUMERIC, "probabilities failed normalization")
        return {"probs": probs.tolist()}


def main() -> int:
    serve(ReferenceBackend())
    return 0


if __name__ == "__main__":
    sys.exit(main())
