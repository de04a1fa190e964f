"""Pure NumPy implementation of the resampling hot-loop kernels.

crtkit._kernels (Cython) implements the same functions with identical
bit-level semantics; crtkit.kernels picks one at import time. Keep the
two in lockstep: the equality test in tests/test_kernels.py compares
them output-for-output.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MULT1 = np.uint64(0xBF58476D1CE4E5B9)
_MULT2 = np.uint64(0x94D049BB133111EB)
_U53 = 2.0**-53


def _mix64(z: np.ndarray) -> np.ndarray:
    # SplitMix64 finalizer on uint64 arrays; wraparound is intended.
    with np.errstate(over="ignore"):
        z = z + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _MULT1
        z = (z ^ (z >> np.uint64(27))) * _MULT2
        return z ^ (z >> np.uint64(31))


def seed_grid(base: int, n_draws: int, n_rows: int) -> np.ndarray:
    """(n_draws, n_rows) matrix with entry [b, i] = derive_seed(base, [b, i])."""
    with np.errstate(over="ignore"):
        t = _mix64(np.uint64(base & 0xFFFFFFFFFFFFFFFF))
        per_draw = _mix64(t ^ np.arange(n_draws, dtype=np.uint64))
        return _mix64(per_draw[:, None] ^ np.arange(n_rows, dtype=np.uint64)[None, :])


def uniforms(seeds: np.ndarray) -> np.ndarray:
    """Map 64-bit seeds to doubles strictly inside (0, 1)."""
    z = _mix64(np.asarray(seeds, dtype=np.uint64))
    return ((z >> np.uint64(11)).astype(np.float64) + 0.5) * _U53


def uniform_grid(base: int, n_draws: int, n_rows: int) -> np.ndarray:
    """Fused seed_grid + uniforms."""
    return uniforms(seed_grid(base, n_draws, n_rows))


def grid_lookup(values: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Index per-row quantile grids by uniform variates.

    values: (m, K) grid per row; u: (B, m) uniforms in [0, 1).
    Returns (B, m) with entry [b, i] = values[i, floor(u[b, i] * K)].
    """
    m, k = values.shape
    idx = np.minimum((u * k).astype(np.int64), k - 1)
    return values[np.arange(m)[None, :], idx]


def categorical_lookup(cum: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF lookup into per-row categorical mass functions.

    cum: (m, L) inclusive cumulative probabilities per row; u: (B, m).
    Returns (B, m) float levels in [0, L).
    """
    levels = (cum[None, :, :-1] <= u[:, :, None]).sum(axis=2)
    return levels.astype(np.float64)
