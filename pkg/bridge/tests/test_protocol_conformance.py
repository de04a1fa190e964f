"""Protocol conformance of the reference worker, spoken over raw NDJSON."""

import json
import math
import subprocess
import sys

import numpy as np
import pytest

WORKER_ARGV = [sys.executable, "-m", "crt_bridge.reference_worker"]

CAPABILITIES = [
    "regression_density",
    "classification_probs",
    "conditional_quantiles",
    "conditional_class_probs",
]


class WorkerSession:
    def __init__(self):
        self.proc = subprocess.Popen(
            WORKER_ARGV,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
            text=True,
            bufsize=1,
        )
        self.next_id = 1

    def send_raw(self, line: str) -> dict:
        self.proc.stdin.write(line + "\n")
        self.proc.stdin.flush()
        raw = self.proc.stdout.readline()
        assert raw, "worker closed stdout"
        return json.loads(raw)

    def rpc(self, op: str, payload: dict, request_id: int | None = None) -> dict:
        if request_id is None:
            request_id = self.next_id
            self.next_id = request_id + 1
        else:
            self.next_id = max(self.next_id, request_id + 1)
        return self.send_raw(json.dumps({"id": request_id, "op": op, "payload": payload}))

    def handshake(self, version: int = 1) -> dict:
        return self.rpc("handshake", {"version": version})

    def close(self):
        try:
            self.proc.stdin.close()
            self.proc.wait(timeout=5)
        except Exception:
            self.proc.kill()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def ok_payload(response: dict) -> dict:
    assert response["ok"] is True, response
    return response["payload"]


def error_code(response: dict) -> str:
    assert response["ok"] is False, response
    return response["error"]["code"]


class TestHandshake:
    def test_matching_version_lists_capabilities(self):
        with WorkerSession() as session:
            payload = ok_payload(session.handshake())
            assert payload["version"] == 1
            assert payload["capabilities"] == CAPABILITIES

    def test_version_mismatch(self):
        with WorkerSession() as session:
            assert error_code(session.handshake(version=2)) == "VERSION"

    def test_double_handshake(self):
        with WorkerSession() as session:
            ok_payload(session.handshake())
            assert error_code(session.handshake()) == "PROTOCOL"

    def test_op_before_handshake(self):
        with WorkerSession() as session:
            response = session.rpc("fit_y", {"X": [[0.0]], "y": [0.0]})
            assert error_code(response) == "PROTOCOL"


class TestSessionRules:
    def test_ids_must_increase(self):
        with WorkerSession() as session:
            ok_payload(session.handshake())
            first = session.rpc("fit_y", {"X": [[0.0]] * 4, "y": [0.0] * 4}, request_id=5)
            assert first["id"] == 5
            repeat = session.rpc("fit_y", {"X": [[0.0]] * 4, "y": [0.0] * 4}, request_id=5)
            assert error_code(repeat) == "PROTOCOL"
            lower = session.rpc("fit_y", {"X": [[0.0]] * 4, "y": [0.0] * 4}, request_id=3)
            assert error_code(lower) == "PROTOCOL"

    def test_malformed_json_answered_not_fatal(self):
        with WorkerSession() as session:
            ok_payload(session.handshake())
            response = session.send_raw("{not json")
            assert response["id"] is None
            assert response["error"]["code"] == "PROTOCOL"
            # session still alive
            ok_payload(session.rpc("fit_y", {"X": [[0.0]] * 4, "y": [0.0] * 4}))

    def test_non_integer_id(self):
        with WorkerSession() as session:
            ok_payload(session.handshake())
            response = session.send_raw(json.dumps({"id": "x", "op": "fit_y", "payload": {}}))
            assert error_code(response) == "PROTOCOL"

    def test_unknown_op(self):
        with WorkerSession() as session:
            ok_payload(session.handshake())
            assert error_code(session.rpc("divine", {})) == "BADREQUEST"


class TestFitAndDensity:
    def test_fit_y_returns_model_id(self):
        with WorkerSession() as session:
            ok_payload(session.handshake())
            rng = np.random.default_rng(1)
            payload = ok_payload(session.rpc(
                "fit_y",
                {"X": rng.standard_normal((10, 2)).tolist(),
                 "y": rng.standard_normal(10).tolist()},
            ))
            assert isinstance(payload["model_id"], str)

    def test_shape_mismatch(self):
        with WorkerSession() as session:
            ok_payload(session.handshake())
            rng = np.random.default_rng(2)
            response = session.rpc(
                "fit_y",
                {"X": rng.standard_normal((10, 2)).tolist(),
                 "y": rng.standard_normal(9).tolist()},
            )
            assert error_code(response) == "BADSHAPE"

    def test_categorical_labels_must_be_integers(self):
        with WorkerSession() as session:
            ok_payload(session.handshake())
            response = session.rpc(
                "fit_y",
                {"X": [[0.0], [1.0], [2.0], [3.0]],
                 "y": [0.0, 1.0, 0.5, 1.0],
                 "y_kind": {"kind": "categorical", "levels": 2}},
            )
            assert error_code(response) == "BADSHAPE"

    def test_standard_normal_log_density_exact(self):
        # Crafted train set makes the OLS predictive exactly N(0, 1):
        # slope and intercept vanish, RSS/(n-p-1) = 1.
        a = math.sqrt(0.5)
        x = [[1.0], [-1.0], [1.0], [-1.0]]
        y = [a, -a, -a, a]
        with WorkerSession() as session:
            ok_payload(session.handshake())
            model_id = ok_payload(session.rpc("fit_y", {"X": x, "y": y}))["model_id"]
            payload = ok_payload(session.rpc(
                "log_density",
                {"model_id": model_id, "X_eval": [[0.3], [-2.0]], "y_eval": [0.0, 0.0]},
            ))
            expected = -0.5 * math.log(2.0 * math.pi)
            assert payload["log_density"] == pytest.approx([expected] * 2, abs=1e-6)

    def test_zero_rows_give_empty_vector(self):
        with WorkerSession() as session:
            ok_payload(session.handshake())
            model_id = ok_payload(session.rpc(
                "fit_y", {"X": [[0.0], [1.0], [2.0], [3.0]], "y": [0.0, 1.0, 2.0, 3.0]}
            ))["model_id"]
            payload = ok_payload(session.rpc(
                "log_density", {"model_id": model_id, "X_eval": [], "y_eval": []}
            ))
            assert payload["log_density"] == []

    def test_stale_model_id(self):
        with WorkerSession() as session:
            ok_payload(session.handshake())
            response = session.rpc(
                "log_density", {"model_id": "m99", "X_eval": [[0.0]], "y_eval": [0.0]}
            )
            assert error_code(response) == "NOTFOUND"


class TestConditionalOps:
    def _fit_conditional(self, session, kind, n=500, seed=3):
        rng = np.random.default_rng(seed)
        x_minus = rng.standard_normal((n, 2))
        if kind["kind"] == "categorical":
            values = rng.integers(0, kind["levels"], n).astype(float)
        else:
            values = rng.standard_normal(n)
        payload = ok_payload(session.rpc(
            "fit_conditional",
            {"X_minus_j": x_minus.tolist(), "x_j": values.tolist(),
             "kind": kind, "seed": seed},
        ))
        return payload["model_id"], x_minus

    def test_median_of_independent_column_near_zero(self):
        # x_j independent of X_-j, so every conditional median is 0 up to
        # estimation noise; at n=2000 and unit-ball eval rows the fitted
        # mean has sd ~ 0.03, making 0.1 a 3-sigma band.
        with WorkerSession() as session:
            ok_payload(session.handshake())
            model_id, x_minus = self._fit_conditional(
                session, {"kind": "continuous"}, n=2000
            )
            eval_rows = 0.5 * x_minus[:20]
            payload = ok_payload(session.rpc(
                "quantiles",
                {"model_id": model_id, "X_minus_j_eval": eval_rows.tolist(),
                 "levels": [0.5]},
            ))
            medians = np.asarray(payload["values"])[:, 0]
            assert np.abs(medians).max() <= 0.1

    def test_quantile_rows_monotone(self):
        with WorkerSession() as session:
            ok_payload(session.handshake())
            model_id, x_minus = self._fit_conditional(session, {"kind": "continuous"})
            levels = ((np.arange(1, 10) - 0.5) / 9).tolist()
            payload = ok_payload(session.rpc(
                "quantiles",
                {"model_id": model_id, "X_minus_j_eval": x_minus[:5].tolist(),
                 "levels": levels},
            ))
            values = np.asarray(payload["values"])
            assert values.shape == (5, 9)
            assert (np.diff(values, axis=1) >= 0).all()

    def test_nonincreasing_levels_rejected(self):
        with WorkerSession() as session:
            ok_payload(session.handshake())
            model_id, x_minus = self._fit_conditional(session, {"kind": "continuous"})
            response = session.rpc(
                "quantiles",
                {"model_id": model_id, "X_minus_j_eval": x_minus[:2].tolist(),
                 "levels": [0.5, 0.25]},
            )
            assert error_code(response) == "BADREQUEST"

    def test_levels_outside_unit_interval_rejected(self):
        with WorkerSession() as session:
            ok_payload(session.handshake())
            model_id, x_minus = self._fit_conditional(session, {"kind": "continuous"})
            for levels in ([0.0, 0.5], [0.5, 1.0]):
                response = session.rpc(
                    "quantiles",
                    {"model_id": model_id, "X_minus_j_eval": x_minus[:2].tolist(),
                     "levels": levels},
                )
                assert error_code(response) == "BADREQUEST"

    def test_class_probs_normalized(self):
        with WorkerSession() as session:
            ok_payload(session.handshake())
            model_id, x_minus = self._fit_conditional(
                session, {"kind": "categorical", "levels": 3}
            )
            payload = ok_payload(session.rpc(
                "class_probs",
                {"model_id": model_id, "X_minus_j_eval": x_minus[:8].tolist()},
            ))
            probs = np.asarray(payload["probs"])
            assert probs.shape == (8, 3)
            assert np.abs(probs.sum(axis=1) - 1.0).max() <= 1e-6

    def test_kind_mismatch_rejected(self):
        with WorkerSession() as session:
            ok_payload(session.handshake())
            continuous_id, x_minus = self._fit_conditional(session, {"kind": "continuous"})
            categorical_id, _ = self._fit_conditional(
                session, {"kind": "categorical", "levels": 2}, seed=4
            )
            assert error_code(session.rpc(
                "class_probs",
                {"model_id": continuous_id, "X_minus_j_eval": x_minus[:2].tolist()},
            )) == "BADREQUEST"
            assert error_code(session.rpc(
                "quantiles",
                {"model_id": categorical_id, "X_minus_j_eval": x_minus[:2].tolist(),
                 "levels": [0.5]},
            )) == "BADREQUEST"


class TestReplayDeterminism:
    def test_identical_transcripts(self):
        rng = np.random.default_rng(9)
        x = rng.standard_normal((30, 2)).tolist()
        y = rng.standard_normal(30).tolist()
        script = [
            {"id": 1, "op": "handshake", "payload": {"version": 1}},
            {"id": 2, "op": "fit_y", "payload": {"X": x, "y": y, "seed": 11}},
            {"id": 3, "op": "log_density",
             "payload": {"model_id": "m1", "X_eval": x[:5], "y_eval": y[:5]}},
            {"id": 4, "op": "fit_conditional",
             "payload": {"X_minus_j": x, "x_j": y, "kind": {"kind": "continuous"},
                          "seed": 12}},
            {"id": 5, "op": "quantiles",
             "payload": {"model_id": "m2", "X_minus_j_eval": x[:3],
                          "levels": [0.25, 0.5, 0.75]}},
        ]

        def transcript():
            with WorkerSession() as session:
                return [session.send_raw(json.dumps(message)) for message in script]

        assert transcript() == transcript()
