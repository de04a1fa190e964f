"""Session loop shared by all workers: framing, handshake, id discipline.

A backend supplies the five model operations; this module owns
everything protocol-shaped. Exactly one response is written per request,
always carrying the request's id (null when the id could not be read).
"""

from __future__ import annotations

import sys
from typing import Any, Protocol

from crt_bridge.protocol import (
    BADREQUEST,
    CAPABILITIES,
    INTERNAL,
    PROTOCOL,
    PROTOCOL_VERSION,
    VERSION,
    WorkerError,
    decode_request,
    encode_response,
)


class Backend(Protocol):
    def fit_y(self, payload: dict[str, Any]) -> dict[str, Any]: ...

    def log_density(self, payload: dict[str, Any]) -> dict[str, Any]: ...

    def fit_conditional(self, payload: dict[str, Any]) -> dict[str, Any]: ...

    def quantiles(self, payload: dict[str, Any]) -> dict[str, Any]: ...

    def class_probs(self, payload: dict[str, Any]) -> dict[str, Any]: ...


_OPS = ("fit_y", "log_density", "fit_conditional", "quantiles", "class_probs")


def serve(backend: Backend, stdin=None, stdout=None) -> None:
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    handshaken = False
    last_id: int | None = None

    def reply(line: str) -> None:
        stdout.write(line + "\n")
        stdout.flush()

    for raw in stdin:
        if not raw.strip():
            continue
        try:
            request = decode_request(raw)
        except WorkerError as exc:
            reply(encode_response(None, error=(exc.code, str(exc))))
            continue
        request_id = request["id"]
        op = request["op"]
        payload = request.get("payload") or {}

        if not isinstance(request_id, int) or (last_id is not None and request_id <= last_id):
            reply(encode_response(
                request_id, error=(PROTOCOL, "request ids must increase strictly")
            ))
            continue
        last_id = request_id

        if op == "handshake":
            if handshaken:
                reply(encode_response(
                    request_id, error=(PROTOCOL, "handshake already completed")
                ))
                continue
            version = payload.get("version")
            if version != PROTOCOL_VERSION:
                reply(encode_response(
                    request_id,
                    error=(VERSION, f"worker speaks version {PROTOCOL_VERSION}, "
                                    f"client sent {version!r}"),
                ))
                continue
            handshaken = True
            reply(encode_response(
                request_id,
                {"version": PROTOCOL_VERSION, "capabilities": CAPABILITIES},
            ))
            continue

        if not handshaken:
            reply(encode_response(
                request_id, error=(PROTOCOL, "handshake must come first")
            ))
            continue
        if op not in _OPS:
            reply(encode_response(request_id, error=(BADREQUEST, f"unknown op {op!r}")))
            continue
        try:
            result = getattr(backend, op)(payload)
            reply(encode_response(request_id, result))
        except WorkerError as exc:
            reply(encode_response(request_id, error=(exc.code, str(exc))))
        except Exception as exc:  # never die mid-session without answering
            reply(encode_response(
                request_id, error=(INTERNAL, f"{type(exc).__name__}: {exc}")
            ))
