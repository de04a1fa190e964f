"""Kernel backend selection.

Imports the compiled extension when available, otherwise the NumPy
fallback. Set CRTKIT_PURE_KERNELS=1 to force the fallback (used by the
benchmark and the backend-equality tests). Both backends produce
bit-identical outputs, so the choice never affects results.
"""

from __future__ import annotations

import os

from crtkit import _kernels_py

if os.environ.get("CRTKIT_PURE_KERNELS") == "1":
    _impl = _kernels_py
    BACKEND = "pure"
else:
    try:
        from crtkit import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "pure"

seed_grid = _impl.seed_grid
uniforms = _impl.uniforms
uniform_grid = _impl.uniform_grid
grid_lookup = _impl.grid_lookup
categorical_lookup = _impl.categorical_lookup

__all__ = [
    "BACKEND",
    "seed_grid",
    "uniforms",
    "uniform_grid",
    "grid_lookup",
    "categorical_lookup",
]
