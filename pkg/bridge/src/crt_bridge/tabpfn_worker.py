"""Optional TabPFN worker: tabular foundation model behind the same protocol.

Needs the `tabpfn` package (`pip install crt-bridge[tabpfn]`). Regression
log densities are derived from a dense predicted-quantile grid by finite
differences of the inverse CDF; the seed field of fit requests is passed
to the estimators, though bitwise replay still depends on the backend's
own determinism.
"""

from __future__ import annotations

import math
import sys
from typing import Any

import numpy as np

from crt_bridge.protocol import BADREQUEST, BADSHAPE, NOTFOUND, NUMERIC, WorkerError
from crt_bridge.reference_worker import _as_matrix, _as_vector, _kind
from crt_bridge.worker import serve

_DENSITY_GRID = 256
_LOG_FLOOR = -700.0  # exp() underflow edge; keeps outputs finite


class _QuantileDensity:
    """Log density from a predicted quantile grid via finite differences."""

    def __init__(self, regressor, n_features: int):
        self.regressor = regressor
        self.n_features = n_features
        self.levels = (np.arange(1, _DENSITY_GRID + 1) - 0.5) / _DENSITY_GRID

    def quantile_matrix(self, x: np.ndarray, levels: np.ndarray) -> np.ndarray:
        predicted = self.regressor.predict(
            x, output_type="quantiles", quantiles=list(levels)
        )
        values = np.stack([np.asarray(col, dtype=np.float64) for col in predicted], axis=1)
        return np.maximum.accumulate(values, axis=1)

    def log_density(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        grid = self.quantile_matrix(x, self.levels)
        out = np.empty(y.shape[0])
        step = 1.0 / _DENSITY_GRID
        for i, target in enumerate(y):
            row = grid[i]
            k = int(np.clip(np.searchsorted(row, target), 1, row.size - 1))
            width = row[k] - row[k - 1]
            out[i] = math.log(step / width) if width > 0 else _LOG_FLOOR
        return np.maximum(out, _LOG_FLOOR)


class _ClassifierDensity:
    def __init__(self, classifier, n_features: int, levels: int):
        self.classifier = classifier
        self.n_features = n_features
        self.levels = levels

    def probs(self, x: np.ndarray) -> np.ndarray:
        probs = np.asarray(self.classifier.predict_proba(x), dtype=np.float64)
        full = np.full((x.shape[0], self.levels), 1e-12)
        for idx, label in enumerate(self.classifier.classes_):
            full[:, int(label)] = probs[:, idx]
        return full / full.sum(axis=1, keepdims=True)

    def log_density(self, x: np.ndarray, labels: np.ndarray) -> np.ndarray:
        idx = labels.astype(np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= self.levels):
            raise WorkerError(BADSHAPE, f"labels must lie in [0, {self.levels})")
        return np.log(self.probs(x)[np.arange(idx.size), idx])


class TabPfnBackend:
    def __init__(self) -> None:
        from tabpfn import TabPFNClassifier, TabPFNRegressor

        self._regressor_cls = TabPFNRegressor
        self._classifier_cls = TabPFNClassifier
        self._models: dict[str, Any] = {}
        self._counter = 0

    def _store(self, model: Any) -> dict[str, Any]:
        self._counter += 1
        model_id = f"t{self._counter}"
        self._models[model_id] = model
        return {"model_id": model_id}

    def _fetch(self, payload: dict[str, Any]) -> Any:
        model = self._models.get(payload.get("model_id"))
        if model is None:
            raise WorkerError(NOTFOUND, f"unknown model_id {payload.get('model_id')!r}")
        return model

    def _fit(self, x: np.ndarray, values: np.ndarray, kind: Any, seed: int) -> dict[str, Any]:
        if x.shape[0] != values.shape[0]:
            raise WorkerError(BADSHAPE, "row counts differ")
        categorical, levels = _kind(kind)
        if categorical:
            if not np.array_equal(values, np.floor(values)):
                raise WorkerError(BADSHAPE, "categorical labels must be integers")
            model = self._classifier_cls(random_state=seed)
            model.fit(x, values.astype(np.int64))
            return self._store(_ClassifierDensity(model, x.shape[1], levels))
        model = self._regressor_cls(random_state=seed)
        model.fit(x, values)
        return self._store(_QuantileDensity(model, x.shape[1]))

    def fit_y(self, payload: dict[str, Any]) -> dict[str, Any]:
        return self._fit(
            _as_matrix(payload.get("X"), "X"),
            _as_vector(payload.get("y"), "y"),
            payload.get("y_kind", {"kind": "continuous"}),
            int(payload.get("seed", 0)),
        )

    def fit_conditional(self, payload: dict[str, Any]) -> dict[str, Any]:
        return self._fit(
            _as_matrix(payload.get("X_minus_j"), "X_minus_j"),
            _as_vector(payload.get("x_j"), "x_j"),
            payload.get("kind", {"kind": "continuous"}),
            int(payload.get("seed", 0)),
        )

    def log_density(self, payload: dict[str, Any]) -> dict[str, Any]:
        model = self._fetch(payload)
        x = _as_matrix(payload.get("X_eval"), "X_eval")
        y = _as_vector(payload.get("y_eval"), "y_eval")
        if x.shape[0] != y.shape[0]:
            raise WorkerError(BADSHAPE, "X_eval and y_eval row counts differ")
        if x.shape[0] == 0:
            return {"log_density": []}
        out = model.log_density(x, y)
        if not np.isfinite(out).all():
            raise WorkerError(NUMERIC, "log density came out non-finite")
        return {"log_density": out.tolist()}

    def quantiles(self, payload: dict[str, Any]) -> dict[str, Any]:
        model = self._fetch(payload)
        if not isinstance(model, _QuantileDensity):
            raise WorkerError(BADREQUEST, "model does not predict conditional quantiles")
        x = _as_matrix(payload.get("X_minus_j_eval"), "X_minus_j_eval")
        levels = _as_vector(payload.get("levels"), "levels")
        if levels.size == 0 or levels.min() <= 0.0 or levels.max() >= 1.0:
            raise WorkerError(BADREQUEST, "levels must lie strictly inside (0, 1)")
        if (np.diff(levels) <= 0).any():
            raise WorkerError(BADREQUEST, "levels must increase strictly")
        values = model.quantile_matrix(x, levels)
        if not np.isfinite(values).all():
            raise WorkerError(NUMERIC, "quantiles came out non-finite")
        return {"values": values.tolist()}

    def class_probs(self, payload: dict[str, Any]) -> dict[str, Any]:
        model = self._fetch(payload)
        if not isinstance(model, _ClassifierDensity):
            raise WorkerError(BADREQUEST, "model does not predict class probabilities")
        x = _as_matrix(payload.get("X_minus_j_eval"), "X_minus_j_eval")
        probs = model.probs(x)
        if not np.isfinite(probs).all() or np.abs(probs.sum(axis=1) - 1.0).max() > 1e-6:
            raise WorkerError(NUMERIC, "probabilities failed normalization")
        return {"probs": probs.tolist()}


def main() -> int:
    try:
        backend = TabPfnBackend()
    except ImportError:
        print(
            "tabpfn is not installed; install with: pip install crt-bridge[tabpfn]",
            file=sys.stderr,
        )
        return 1
    serve(backend)
    return 0


if __name__ == "__main__":
    sys.exit(main())
