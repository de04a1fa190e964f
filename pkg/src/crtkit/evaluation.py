"""Experiment harness: repeated splits, power/type-I aggregation, diagnostics.

Per dataset and repeat: generate with a derived seed, split, fit, test
every feature, record rejections at level alpha. Power averages the 0/1
rejection cells over truly relevant features, type-I over irrelevant
ones. Pooled p-values feed the ECDF and QQ calibration diagnostics.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from crtkit.bridge import BridgeClient, BridgeError
from crtkit.core import CrtConfig, derive_seed, name_tag
from crtkit.crt import FeatureScan, test_all_features
from crtkit.dgp import DgpSpec, generate
from crtkit.registry import resolve_sampler, resolve_y_model

_STREAM_GENERATE = 0
_STREAM_TEST = 1


@dataclass(frozen=True)
class ExperimentConfig:
    dgp_names: tuple[str, ...]
    n: int = 500
    n_repeats: int = 5
    crt: CrtConfig = field(default_factory=CrtConfig)
    y_model: str = "auto"
    sampler: str = "oracle"

    def __post_init__(self) -> None:
        object.__setattr__(self, "dgp_names", tuple(self.dgp_names))
        if not self.dgp_names:
            raise ValueError("dgp_names must be non-empty")
        if self.n_repeats < 1:
            raise ValueError("n_repeats must be >= 1")
        if self.n < 2:
            raise ValueError("n must be >= 2")


@dataclass(frozen=True)
class PValueRecord:
    dataset: str
    repeat: int
    feature: int
    relevant: bool
    p_value: float


@dataclass(frozen=True)
class DatasetSummary:
    name: str
    p: int
    n_relevant: int
    power: float | None
    type1: float | None


@dataclass(frozen=True)
class ExperimentReport:
    rows: tuple[DatasetSummary, ...]
    pooled: tuple[PValueRecord, ...]
    errors: tuple[str, ...]
    alpha: float

    def pvalues(self, relevant: bool) -> np.ndarray:
        return np.asarray(
            [r.p_value for r in self.pooled if r.relevant == relevant], dtype=np.float64
        )


def run_experiment(
    config: ExperimentConfig,
    bridge: BridgeClient | None = None,
    n_threads: int = 1,
) -> ExperimentReport:
    """Run the full suite; deterministic for any thread count."""
    cells = [(name, r) for name in config.dgp_names for r in range(config.n_repeats)]

    def run_cell(cell: tuple[str, int]) -> tuple[DgpSpec, FeatureScan]:
        name, r = cell
        rep_seed = derive_seed(config.crt.master_seed, [name_tag(name), r])
        instance = generate(name, config.n, derive_seed(rep_seed, [_STREAM_GENERATE]))
        crt_config = replace(
            config.crt, master_seed=derive_seed(rep_seed, [_STREAM_TEST])
        )
        y_factory = resolve_y_model(config.y_model, crt_config, bridge)
        sampler_factory = resolve_sampler(
            config.sampler, crt_config, instance.spec, bridge
        )
        scan = test_all_features(instance.data, crt_config, y_factory, sampler_factory)
        return instance.spec, scan

    outcomes: dict[tuple[str, int], tuple[DgpSpec, FeatureScan] | str] = {}
    if n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            futures = {cell: pool.submit(run_cell, cell) for cell in cells}
        for cell, future in futures.items():
            try:
                outcomes[cell] = future.result()
            except BridgeError:
                raise
            except Exception as exc:
                outcomes[cell] = f"{type(exc).__name__}: {exc}"
    else:
        for cell in cells:
            try:
                outcomes[cell] = run_cell(cell)
            except BridgeError:
                raise
            except Exception as exc:
                outcomes[cell] = f"{type(exc).__name__}: {exc}"

    alpha = config.crt.alpha
    rows: list[DatasetSummary] = []
    pooled: list[PValueRecord] = []
    errors: list[str] = []
    for name in config.dgp_names:
        relevant_cells: list[int] = []
        irrelevant_cells: list[int] = []
        spec: DgpSpec | None = None
        for r in range(config.n_repeats):
            outcome = outcomes[(name, r)]
            if isinstance(outcome, str):
                errors.append(f"{name}[repeat {r}]: {outcome}")
                continue
            spec, scan = outcome
            for j, message in sorted(scan.errors.items()):
                errors.append(f"{name}[repeat {r}] feature {j}: {message}")
            for result in scan.results:
                is_relevant = result.feature_index in spec.relevant_set
                pooled.append(
                    PValueRecord(name, r, result.feature_index, is_relevant, result.p_value)
                )
                cell = 1 if result.p_value <= alpha else 0
                (relevant_cells if is_relevant else irrelevant_cells).append(cell)
        if spec is None:
            continue
        rows.append(
            DatasetSummary(
                name=name,
                p=spec.p,
                n_relevant=len(spec.relevant_set),
                power=float(np.mean(relevant_cells)) if relevant_cells else None,
                type1=float(np.mean(irrelevant_cells)) if irrelevant_cells else None,
            )
        )
    return ExperimentReport(
        rows=tuple(rows), pooled=tuple(pooled), errors=tuple(errors), alpha=alpha
    )


def ecdf(p_values: Sequence[float] | np.ndarray) -> list[tuple[float, float]]:
    """Right-continuous ECDF evaluated at the sorted unique values."""
    arr = np.asarray(p_values, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("ecdf needs at least one value")
    if (arr <= 0).any() or (arr > 1).any():
        raise ValueError("p-values must lie in (0, 1]")
    ordered = np.sort(arr)
    xs = np.unique(ordered)
    fractions = np.searchsorted(ordered, xs, side="right") / arr.size
    return list(zip(xs.tolist(), fractions.tolist()))


def qq_uniform(p_values: Sequence[float] | np.ndarray) -> list[tuple[float, float]]:
    """Sorted values against uniform plotting positions i/(m+1)."""
    arr = np.sort(np.asarray(p_values, dtype=np.float64))
    if arr.size == 0:
        raise ValueError("qq_uniform needs at least one value")
    positions = np.arange(1, arr.size + 1) / (arr.size + 1)
    return list(zip(positions.tolist(), arr.tolist()))


TABLE_COLUMNS = ("dataset", "p", "relevant", "power", "type1", "note")


def table_report(report: ExperimentReport) -> list[dict[str, str]]:
    """Benchmark-table rows with two-decimal cells; em dash marks empty cells."""
    if not report.rows:
        raise ValueError("report has no rows")
    out = []
    for row in report.rows:
        note = ""
        if row.type1 is None:
            note = "no irrelevant features"
        out.append(
            {
                "dataset": row.name,
                "p": str(row.p),
                "relevant": str(row.n_relevant),
                "power": "—" if row.power is None else f"{row.power:.2f}",
                "type1": "—" if row.type1 is None else f"{row.type1:.2f}",
                "note": note,
            }
        )
    return out


def render_table(rows: list[dict[str, str]]) -> str:
    headers = {
        "dataset": "Dataset",
        "p": "p",
        "relevant": "|R|",
        "power": "Power",
        "type1": "Type-I",
        "note": "",
    }
    widths = {
        col: max(len(headers[col]), *(len(r[col]) for r in rows)) for col in TABLE_COLUMNS
    }
    lines = ["  ".join(headers[c].ljust(widths[c]) for c in TABLE_COLUMNS).rstrip()]
    for r in rows:
        lines.append("  ".join(r[c].ljust(widths[c]) for c in TABLE_COLUMNS).rstrip())
    return "\n".join(lines)
