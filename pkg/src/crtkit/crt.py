"""Conditional randomization test engine.

The observed mean log predictive density on the evaluation fold is
compared against B copies where the tested column is replaced by draws
from its conditional distribution given the remaining columns. Models
are fitted once on the training fold and never refitted.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from crtkit import kernels
from crtkit.core import (
    CrtConfig,
    CrtResult,
    Dataset,
    FeatureKind,
    derive_seed,
    split_dataset,
)
from crtkit.models import ConditionalSampler, PredictiveModel

# Seed-path stream tags; keep distinct so no two stochastic steps share a stream.
STREAM_SPLIT = 0
STREAM_DRAWS = 1

YModelFactory = Callable[[np.ndarray, np.ndarray, FeatureKind], PredictiveModel]
SamplerFactory = Callable[[np.ndarray, np.ndarray, FeatureKind, int], ConditionalSampler]


class StatisticError(RuntimeError):
    """A test statistic came out non-finite."""


@dataclass(frozen=True)
class TestPlan:
    """Everything needed to test one feature on a held-out fold."""

    feature_index: int
    config: CrtConfig
    y_model: PredictiveModel
    sampler: ConditionalSampler
    eval_features: np.ndarray
    eval_target: np.ndarray
    seed: int


def elpd(model: PredictiveModel, x: np.ndarray, y: np.ndarray) -> float:
    """Mean log predictive density over the given rows, nats per observation."""
    y = np.asarray(y, dtype=np.float64)
    if y.size == 0:
        raise ValueError("elpd needs at least one row")
    return float(np.mean(model.log_density(x, y)))


def mc_pvalue(t_obs: float, t_null: np.ndarray) -> float:
    """Finite-sample Monte Carlo p-value (1 + #{T_b >= T_obs}) / (B + 1).

    Right-tailed with an inclusive comparison, so ties count as extreme.
    """
    t_null = np.asarray(t_null, dtype=np.float64)
    if t_null.size == 0:
        raise ValueError("t_null must be non-empty")
    if not np.isfinite(t_obs) or not np.isfinite(t_null).all():
        raise ValueError("statistics must be finite")
    return (1 + int(np.sum(t_null >= t_obs))) / (t_null.size + 1)


def run_crt(plan: TestPlan) -> CrtResult:
    """Observed statistic, B null statistics, and the Monte Carlo p-value."""
    x_eval = np.asarray(plan.eval_features, dtype=np.float64)
    y_eval = np.asarray(plan.eval_target, dtype=np.float64)
    j = plan.feature_index
    num_draws = plan.config.num_null_draws
    m = x_eval.shape[0]

    t_obs = elpd(plan.y_model, x_eval, y_eval)
    if not np.isfinite(t_obs):
        raise StatisticError("observed statistic is non-finite")

    seeds = kernels.seed_grid(plan.seed, num_draws, m)
    x_minus = np.delete(x_eval, j, axis=1)
    draws = plan.sampler.sample_matrix(x_minus, seeds)
    if draws.shape != (num_draws, m):
        raise ValueError(f"sampler returned shape {draws.shape}, expected {(num_draws, m)}")
    bad = ~np.isfinite(draws)
    if bad.any():
        b = int(np.argwhere(bad.any(axis=1))[0, 0])
        raise StatisticError(f"sampler produced a non-finite value in draw {b}")

    t_null = np.empty(num_draws)
    x_null = np.array(x_eval)
    for b in range(num_draws):
        x_null[:, j] = draws[b]
        t_null[b] = elpd(plan.y_model, x_null, y_eval)
        if not np.isfinite(t_null[b]):
            raise StatisticError(f"null statistic is non-finite in draw {b}")
    return CrtResult(feature_index=j, t_obs=t_obs, t_null=t_null)


@dataclass(frozen=True)
class FeatureScan:
    """Per-feature test outcomes for one dataset split."""

    results: tuple[CrtResult, ...]
    errors: Mapping[int, str]

    def by_feature(self) -> dict[int, CrtResult]:
        return {r.feature_index: r for r in self.results}


def test_all_features(
    data: Dataset,
    config: CrtConfig,
    y_model_factory: YModelFactory,
    sampler_factory: SamplerFactory,
    features: Sequence[int] | None = None,
) -> FeatureScan:
    """Test every feature (or a subset) on one train/eval split.

    The predictive model for the target is fitted exactly once and shared
    across features; each feature gets its own conditional sampler and its
    own deterministic draw seeds, so a subset run reproduces the exact
    p-values of the full scan. A failing feature is recorded and the scan
    moves on.
    """
    split = split_dataset(
        data, config.split_fraction, derive_seed(config.master_seed, [STREAM_SPLIT])
    )
    x_train = data.features[split.train]
    y_train = data.target[split.train]
    x_eval = data.features[split.eval]
    y_eval = data.target[split.eval]

    y_model = y_model_factory(x_train, y_train, data.target_kind)

    if features is None:
        features = range(data.p)
    results: list[CrtResult] = []
    errors: dict[int, str] = {}
    for j in features:
        try:
            sampler = sampler_factory(
                np.delete(x_train, j, axis=1), x_train[:, j], data.kinds[j], j
            )
            plan = TestPlan(
                feature_index=j,
                config=config,
                y_model=y_model,
                sampler=sampler,
                eval_features=x_eval,
                eval_target=y_eval,
                seed=derive_seed(config.master_seed, [STREAM_DRAWS, j]),
            )
            results.append(run_crt(plan))
        except Exception as exc:
            from crtkit.bridge import BridgeError

            if isinstance(exc, BridgeError):
                raise
            errors[j] = f"{type(exc).__name__}: {exc}"
    return FeatureScan(results=tuple(results), errors=errors)
