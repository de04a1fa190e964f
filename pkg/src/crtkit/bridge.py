"""Client side of the external-model worker protocol.

Workers are child processes speaking newline-delimited JSON over
stdin/stdout: requests {id, op, payload}, responses {id, ok, payload}
or {id, ok: false, error: {code, message}}. Exactly one request is in
flight per worker and ids increase strictly. Worker responses are
validated (finiteness, monotone quantiles, probability normalization)
before anything reaches the test engine.
"""

from __future__ import annotations

import json
import queue
import shlex
import subprocess
import threading
from collections import deque
from typing import Any, Sequence

import numpy as np

from crtkit.core import CONTINUOUS, FeatureKind
from crtkit.models import (
    ConditionalSampler,
    PredictiveModel,
    QuantileGrid,
    quantile_levels,
    sample_categorical,
    sample_from_grid,
)

PROTOCOL_VERSION = 1
DEFAULT_TIMEOUT = 300.0
PROB_TOLERANCE = 1e-6
CAPABILITIES = (
    "regression_density",
    "classification_probs",
    "conditional_quantiles",
    "conditional_class_probs",
)


class BridgeError(Exception):
    """Base class for all external-worker failures; aborts the run."""


class BridgeProtocolError(BridgeError):
    """Malformed traffic or a broken session (bad ids, bad JSON, early exit)."""


class BridgeTimeoutError(BridgeError):
    """Worker did not answer within the per-call timeout."""


class BridgeWorkerError(BridgeError):
    """Worker answered with an error response."""

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


class BridgeValidationError(BridgeError):
    """Worker response failed client-side validation."""


def kind_to_wire(kind: FeatureKind) -> dict[str, Any]:
    if kind.is_categorical:
        return {"kind": "categorical", "levels": kind.levels}
    return {"kind": "continuous"}


def kind_from_wire(obj: dict[str, Any]) -> FeatureKind:
    if obj.get("kind") == "categorical":
        return FeatureKind.categorical(int(obj["levels"]))
    if obj.get("kind") == "continuous":
        return CONTINUOUS
    raise BridgeProtocolError(f"bad kind object: {obj!r}")


class BridgeClient:
    """Owns one worker process and the request/response session with it."""

    def __init__(self, command: str | Sequence[str], timeout: float = DEFAULT_TIMEOUT):
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        if not argv:
            raise BridgeProtocolError("empty bridge command")
        self._timeout = timeout
        self._next_id = 1
        self._closed = False
        self._stderr_tail: deque[str] = deque(maxlen=20)
        try:
            self._proc = subprocess.Popen(
                argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise BridgeProtocolError(f"cannot launch worker {argv[0]!r}: {exc}") from exc
        self._lines: queue.Queue[str | None] = queue.Queue()
        threading.Thread(target=self._read_stdout, daemon=True).start()
        threading.Thread(target=self._read_stderr, daemon=True).start()
        self.capabilities = self._handshake()

    def _read_stdout(self) -> None:
        assert self._proc.stdout is not None
        for line in self._proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def _read_stderr(self) -> None:
        assert self._proc.stderr is not None
        for line in self._proc.stderr:
            self._stderr_tail.append(line.rstrip())

    def _diagnostic(self) -> str:
        tail = "\n".join(self._stderr_tail)
        return f"; worker stderr:\n{tail}" if tail else ""

    def _handshake(self) -> tuple[str, ...]:
        payload = self.request("handshake", {"version": PROTOCOL_VERSION})
        version = payload.get("version")
        if version != PROTOCOL_VERSION:
            self.close()
            raise BridgeProtocolError(
                f"protocol version mismatch: client {PROTOCOL_VERSION}, worker {version}"
            )
        return tuple(payload.get("capabilities", ()))

    def request(self, op: str, payload: dict[str, Any]) -> dict[str, Any]:
        if self._closed:
            raise BridgeProtocolError("bridge client is closed")
        request_id = self._next_id
        self._next_id += 1
        line = json.dumps({"id": request_id, "op": op, "payload": payload})
        try:
            assert self._proc.stdin is not None
            self._proc.stdin.write(line + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise BridgeProtocolError(f"worker pipe closed{self._diagnostic()}") from exc
        try:
            raw = self._lines.get(timeout=self._timeout)
        except queue.Empty:
            self.close()
            raise BridgeTimeoutError(
                f"no response to {op!r} within {self._timeout}s"
            ) from None
        if raw is None:
            raise BridgeProtocolError(f"worker exited during {op!r}{self._diagnostic()}")
        try:
            response = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise BridgeProtocolError(f"bad JSON from worker: {raw[:200]!r}") from exc
        if response.get("id") != request_id:
            raise BridgeProtocolError(
                f"response id {response.get('id')!r} does not match request {request_id}"
            )
        if response.get("ok") is True:
            result = response.get("payload")
            return result if isinstance(result, dict) else {}
        error = response.get("error") or {}
        raise BridgeWorkerError(
            str(error.get("code", "UNKNOWN")), str(error.get("message", raw[:200]))
        )

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        try:
            if self._proc.stdin is not None:
                self._proc.stdin.close()
            self._proc.wait(timeout=5)
        except Exception:
            self._proc.kill()

    def __enter__(self) -> "BridgeClient":
        return self

    def __exit__(self, *exc_info: object) -> None:
        self.close()


def _validate_matrix(obj: Any, shape: tuple[int, int], what: str) -> np.ndarray:
    arr = np.asarray(obj, dtype=np.float64)
    if arr.shape != shape:
        raise BridgeValidationError(f"{what}: shape {arr.shape}, expected {shape}")
    if not np.isfinite(arr).all():
        raise BridgeValidationError(f"{what}: non-finite values")
    return arr


class ExternalPredictiveModel(PredictiveModel):
    def __init__(self, client: BridgeClient, model_id: str):
        self._client = client
        self._model_id = model_id

    def log_density(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        payload = self._client.request(
            "log_density",
            {"model_id": self._model_id, "X_eval": x.tolist(), "y_eval": y.tolist()},
        )
        arr = np.asarray(payload.get("log_density"), dtype=np.float64)
        if arr.shape != y.shape:
            raise BridgeValidationError(
                f"log_density: shape {arr.shape}, expected {y.shape}"
            )
        if not np.isfinite(arr).all():
            raise BridgeValidationError("log_density: non-finite values")
        return arr


class ExternalQuantileSampler(ConditionalSampler):
    def __init__(self, client: BridgeClient, model_id: str, grid_size: int):
        self._client = client
        self._model_id = model_id
        self._grid_size = grid_size

    @property
    def kind(self) -> FeatureKind:
        return CONTINUOUS

    def grid(self, x_minus: np.ndarray) -> QuantileGrid:
        x_minus = np.asarray(x_minus, dtype=np.float64)
        levels = quantile_levels(self._grid_size)
        payload = self._client.request(
            "quantiles",
            {
                "model_id": self._model_id,
                "X_minus_j_eval": x_minus.tolist(),
                "levels": levels.tolist(),
            },
        )
        values = _validate_matrix(
            payload.get("values"), (x_minus.shape[0], self._grid_size), "quantiles"
        )
        if (np.diff(values, axis=1) < 0).any():
            raise BridgeValidationError("quantiles: rows are not monotone nondecreasing")
        return QuantileGrid(values)

    def sample_matrix(self, x_minus: np.ndarray, seeds: np.ndarray) -> np.ndarray:
        return sample_from_grid(self.grid(x_minus), seeds)


class ExternalCategoricalSampler(ConditionalSampler):
    def __init__(self, client: BridgeClient, model_id: str, levels: int):
        self._client = client
        self._model_id = model_id
        self._levels = levels

    @property
    def kind(self) -> FeatureKind:
        return FeatureKind.categorical(self._levels)

    def class_probs(self, x_minus: np.ndarray) -> np.ndarray:
        x_minus = np.asarray(x_minus, dtype=np.float64)
        payload = self._client.request(
            "class_probs",
            {"model_id": self._model_id, "X_minus_j_eval": x_minus.tolist()},
        )
        probs = _validate_matrix(
            payload.get("probs"), (x_minus.shape[0], self._levels), "class_probs"
        )
        if probs.min() < 0:
            raise BridgeValidationError("class_probs: negative probability")
        sums = probs.sum(axis=1)
        if np.abs(sums - 1.0).max() > PROB_TOLERANCE:
            raise BridgeValidationError(
                f"class_probs: rows sum to {sums.min():.6g}..{sums.max():.6g}, not 1"
            )
        return probs

    def sample_matrix(self, x_minus: np.ndarray, seeds: np.ndarray) -> np.ndarray:
        return sample_categorical(self.class_probs(x_minus), seeds)


def external_y_model(
    client: BridgeClient,
    x: np.ndarray,
    y: np.ndarray,
    target_kind: FeatureKind,
    seed: int,
) -> ExternalPredictiveModel:
    """Fit the worker's p(y|x) model and wrap it as a PredictiveModel."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    payload = client.request(
        "fit_y",
        {
            "X": x.tolist(),
            "y": y.tolist(),
            "y_kind": kind_to_wire(target_kind),
            "seed": int(seed),
        },
    )
    model_id = payload.get("model_id")
    if not isinstance(model_id, str):
        raise BridgeValidationError("fit_y: missing model_id")
    return ExternalPredictiveModel(client, model_id)


def external_conditional_sampler(
    client: BridgeClient,
    x_minus: np.ndarray,
    values: np.ndarray,
    kind: FeatureKind,
    grid_size: int,
    seed: int,
) -> ConditionalSampler:
    """Fit the worker's p(X_j | X_-j) model and wrap it as a ConditionalSampler."""
    x_minus = np.asarray(x_minus, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    payload = client.request(
        "fit_conditional",
        {
            "X_minus_j": x_minus.tolist(),
            "x_j": values.tolist(),
            "kind": kind_to_wire(kind),
            "seed": int(seed),
        },
    )
    model_id = payload.get("model_id")
    if not isinstance(model_id, str):
        raise BridgeValidationError("fit_conditional: missing model_id")
    if kind.is_categorical:
        return ExternalCategoricalSampler(client, model_id, kind.levels)
    return ExternalQuantileSampler(client, model_id, grid_size)
