"""Stdio model workers for the crtkit external-model protocol."""

from crt_bridge.protocol import CAPABILITIES, PROTOCOL_VERSION, WorkerError

__version__ = "0.1.0"

__all__ = ["CAPABILITIES", "PROTOCOL_VERSION", "WorkerError", "__version__"]
