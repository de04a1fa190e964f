"""Shared domain types and the deterministic seeding contract.

Every stochastic step in the library draws its randomness from a seed
derived with :func:`derive_seed`, so results never depend on execution
order or worker count.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

_MASK64 = 0xFFFFFFFFFFFFFFFF
_GOLDEN = 0x9E3779B97F4A7C15


def _mix64(z: int) -> int:
    # SplitMix64 finalizer; full 64-bit avalanche.
    z = (z + _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(master_seed: int, path: Iterable[int] = ()) -> int:
    """Mix a master seed with a hierarchical path into a new 64-bit seed.

    The path encodes the position of a unit of work (repeat index,
    feature index, draw index, ...). The fold is order-sensitive, so
    ``[a, b]`` and ``[b, a]`` land on different streams.
    """
    s = _mix64(master_seed & _MASK64)
    for q in path:
        s = _mix64(s ^ (int(q) & _MASK64))
    return s


def name_tag(name: str) -> int:
    """Stable 64-bit tag for a string, for use as a seed-path element."""
    # FNV-1a; Python's hash() is salted per process and unusable here.
    h = 0xCBF29CE484222325
    for byte in name.encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & _MASK64
    return h


@dataclass(frozen=True)
class FeatureKind:
    """Continuous column, or categorical with a fixed number of levels."""

    levels: int | None = None

    def __post_init__(self) -> None:
        if self.levels is not None and self.levels < 2:
            raise ValueError(f"categorical kind needs >= 2 levels, got {self.levels}")

    @property
    def is_categorical(self) -> bool:
        return self.levels is not None

    @classmethod
    def continuous(cls) -> "FeatureKind":
        return cls(None)

    @classmethod
    def categorical(cls, levels: int) -> "FeatureKind":
        return cls(int(levels))


CONTINUOUS = FeatureKind.continuous()


@dataclass(frozen=True)
class Dataset:
    """Feature matrix with per-column kinds and a target column.

    Categorical columns are stored as level indices 0..levels-1 inside the
    single float matrix; any label mapping belongs at the I/O boundary.
    """

    features: np.ndarray
    kinds: tuple[FeatureKind, ...]
    target: np.ndarray
    target_kind: FeatureKind

    def __post_init__(self) -> None:
        features = np.ascontiguousarray(np.asarray(self.features, dtype=np.float64))
        target = np.ascontiguousarray(np.asarray(self.target, dtype=np.float64))
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "target", target)
        if features.ndim != 2:
            raise ValueError("features must be a 2-d matrix")
        n, p = features.shape
        if n < 2:
            raise ValueError(f"need at least 2 rows, got {n}")
        if p < 1:
            raise ValueError("need at least 1 feature column")
        if len(self.kinds) != p:
            raise ValueError(f"kinds has {len(self.kinds)} entries for {p} columns")
        if target.shape != (n,):
            raise ValueError("target length must match the row count")
        if not np.isfinite(features).all():
            raise ValueError("features contain non-finite values")
        if not np.isfinite(target).all():
            raise ValueError("target contains non-finite values")
        for j, kind in enumerate(self.kinds):
            if kind.is_categorical:
                _check_levels(features[:, j], kind.levels, f"feature column {j}")
        if self.target_kind.is_categorical:
            _check_levels(target, self.target_kind.levels, "target")
        features.setflags(write=False)
        target.setflags(write=False)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]


def _check_levels(column: np.ndarray, levels: int, what: str) -> None:
    if not np.array_equal(column, np.floor(column)):
        raise ValueError(f"{what}: categorical entries must be integers")
    if column.min() < 0 or column.max() >= levels:
        raise ValueError(f"{what}: categorical entries must lie in [0, {levels})")


@dataclass(frozen=True)
class SplitIndices:
    """Disjoint train/eval row indices covering the whole dataset."""

    train: np.ndarray
    eval: np.ndarray

    def __post_init__(self) -> None:
        train = np.asarray(self.train, dtype=np.intp)
        ev = np.asarray(self.eval, dtype=np.intp)
        object.__setattr__(self, "train", train)
        object.__setattr__(self, "eval", ev)
        if train.size == 0 or ev.size == 0:
            raise ValueError("both split sides must be non-empty")
        combined = np.concatenate([train, ev])
        n = combined.size
        if not np.array_equal(np.sort(combined), np.arange(n)):
            raise ValueError("train and eval must partition 0..n-1")


def split_dataset(data: Dataset, fraction: float, seed: int) -> SplitIndices:
    """Uniformly random train/eval partition with |train| = floor(fraction * n)."""
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must lie in (0, 1), got {fraction}")
    n = data.n
    n_train = int(np.floor(fraction * n))
    if n_train < 1 or n - n_train < 1:
        raise ValueError(
            f"degenerate split: fraction {fraction} of {n} rows leaves an empty side"
        )
    perm = np.random.default_rng(seed).permutation(n)
    return SplitIndices(train=np.sort(perm[:n_train]), eval=np.sort(perm[n_train:]))


@dataclass(frozen=True)
class CrtConfig:
    """Knobs of the randomization test and the split protocol."""

    num_null_draws: int = 1000
    quantile_grid_size: int = 200
    alpha: float = 0.05
    split_fraction: float = 0.8
    master_seed: int = 0

    def __post_init__(self) -> None:
        if self.num_null_draws < 1:
            raise ValueError("num_null_draws must be >= 1")
        if self.quantile_grid_size < 2:
            raise ValueError("quantile_grid_size must be >= 2")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if not 0.0 < self.split_fraction < 1.0:
            raise ValueError("split_fraction must lie in (0, 1)")
        if not 0 <= self.master_seed <= _MASK64:
            raise ValueError("master_seed must fit in 64 bits")


@dataclass(frozen=True)
class CrtResult:
    """Outcome of testing one feature: observed statistic, null draws, p-value."""

    feature_index: int
    t_obs: float
    t_null: np.ndarray
    p_value: float = field(init=False)

    def __post_init__(self) -> None:
        t_null = np.asarray(self.t_null, dtype=np.float64)
        t_null.setflags(write=False)
        object.__setattr__(self, "t_null", t_null)
        if t_null.ndim != 1 or t_null.size == 0:
            raise ValueError("t_null must be a non-empty vector")
        if not np.isfinite(self.t_obs) or not np.isfinite(t_null).all():
            raise ValueError("statistics must be finite")
        b = t_null.size
        p = (1 + int(np.sum(t_null >= self.t_obs))) / (b + 1)
        object.__setattr__(self, "p_value", p)

    @property
    def num_null_draws(self) -> int:
        return int(self.t_null.size)

    def reject(self, alpha: float) -> bool:
        return self.p_value <= alpha
