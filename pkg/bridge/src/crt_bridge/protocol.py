"""Wire protocol shared by all workers.

One JSON object per line on stdin/stdout. Requests are
{id, op, payload}; responses are {id, ok: true, payload} or
{id, ok: false, error: {code, message}}. Ids must increase strictly
within a session and the first request must be a handshake carrying the
protocol version. Floats ride as plain JSON numbers, which Python
serializes with round-trip precision.
"""

from __future__ import annotations

import json
from typing import Any

PROTOCOL_VERSION = 1

CAPABILITIES = [
    "regression_density",
    "classification_probs",
    "conditional_quantiles",
    "conditional_class_probs",
]

# Error codes
VERSION = "VERSION"  # protocol version mismatch
PROTOCOL = "PROTOCOL"  # broken session rules (ids, handshake, framing)
BADSHAPE = "BADSHAPE"  # inconsistent array shapes or label domains
BADREQUEST = "BADREQUEST"  # invalid arguments (levels, unknown op, kind mismatch)
NOTFOUND = "NOTFOUND"  # unknown model id
NUMERIC = "NUMERIC"  # output failed numeric validation
INTERNAL = "INTERNAL"  # unexpected worker failure


class WorkerError(Exception):
    """Backend failure with a protocol error code."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


def encode_response(request_id: Any, payload: dict | None = None,
                    error: tuple[str, str] | None = None) -> str:
    if error is not None:
        code, message = error
        body = {"id": request_id, "ok": False,
                "error": {"code": code, "message": message}}
    else:
        body = {"id": request_id, "ok": True, "payload": payload or {}}
    return json.dumps(body)


def decode_request(line: str) -> dict[str, Any]:
    try:
        request = json.loads(line)
    except json.JSONDecodeError as exc:
        raise WorkerError(PROTOCOL, f"malformed JSON: {exc}") from exc
    if not isinstance(request, dict) or "id" not in request or "op" not in request:
        raise WorkerError(PROTOCOL, "request must carry id and op")
    return request
