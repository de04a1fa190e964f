"""File formats: dataset CSV + truth sidecar JSON, report/diagnostic CSVs.

All floats are written with repr round-trip precision so that re-reading
reproduces the exact values and byte-level determinism checks hold.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from crtkit.core import CONTINUOUS, CrtResult, Dataset, FeatureKind
from crtkit.dgp import DgpSpec, spec_for
from crtkit.evaluation import TABLE_COLUMNS, ExperimentReport

_MAX_INFERRED_LEVELS = 10


def fmt_float(x: float) -> str:
    return repr(float(x))


def _fmt_cell(value: float, kind: FeatureKind) -> str:
    if kind.is_categorical:
        return str(int(value))
    return fmt_float(value)


def write_dataset_csv(path: str | Path, data: Dataset) -> None:
    header = [f"x{j + 1}" for j in range(data.p)] + ["y"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(data.n):
            row = [_fmt_cell(data.features[i, j], data.kinds[j]) for j in range(data.p)]
            row.append(_fmt_cell(data.target[i], data.target_kind))
            writer.writerow(row)


def truth_path_for(data_path: str | Path) -> Path:
    path = Path(data_path)
    if path.suffix == ".csv":
        return path.with_suffix(".truth.json")
    return path.with_name(path.name + ".truth.json")


def write_truth(path: str | Path, spec: DgpSpec, seed: int) -> None:
    payload = {
        "name": spec.name,
        "n": spec.n,
        "p": spec.p,
        "relevant_set": sorted(spec.relevant_set),
        "seed": int(seed),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def read_truth(path: str | Path) -> tuple[DgpSpec, int]:
    with open(path) as fh:
        payload = json.load(fh)
    spec = spec_for(payload["name"], int(payload["n"]))
    if spec.p != int(payload["p"]) or sorted(spec.relevant_set) != sorted(
        payload["relevant_set"]
    ):
        raise ValueError(f"truth sidecar {path} disagrees with the {spec.name} generator")
    return spec, int(payload["seed"])


def _infer_kind(column: np.ndarray) -> FeatureKind:
    # Integer-valued columns with a small 0..L-1 range read as categorical;
    # everything else is continuous. The truth sidecar overrides inference.
    if not np.array_equal(column, np.floor(column)):
        return CONTINUOUS
    low, high = column.min(), column.max()
    levels = int(high) + 1
    if low < 0 or levels < 2 or levels > _MAX_INFERRED_LEVELS:
        return CONTINUOUS
    if np.unique(column).size < 2:
        return CONTINUOUS
    return FeatureKind.categorical(levels)


def read_dataset_csv(path: str | Path, spec: DgpSpec | None = None) -> Dataset:
    """Load a dataset; the last column is the target.

    With a generator spec the column kinds are taken from it; otherwise
    kinds are inferred per column.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or len(header) < 2:
            raise ValueError(f"{path}: need a header row with at least two columns")
        rows = [[float(cell) for cell in row] for row in reader if row]
    if not rows:
        raise ValueError(f"{path}: no data rows")
    matrix = np.asarray(rows, dtype=np.float64)
    if matrix.shape[1] != len(header):
        raise ValueError(f"{path}: ragged rows")
    features, target = matrix[:, :-1], matrix[:, -1]
    p = features.shape[1]
    if spec is not None:
        if spec.p != p:
            raise ValueError(f"{path}: {p} feature columns, generator has {spec.p}")
        kinds: tuple[FeatureKind, ...] = (CONTINUOUS,) * p
        target_kind = (
            FeatureKind.categorical(2) if spec.name == "xor" else CONTINUOUS
        )
    else:
        kinds = tuple(_infer_kind(features[:, j]) for j in range(p))
        target_kind = _infer_kind(target)
    return Dataset(features, kinds, target, target_kind)


def write_results(
    path_or_stream: Any,
    results: Sequence[CrtResult],
    alpha: float,
    fmt: str = "csv",
) -> None:
    records = [
        {
            "feature": r.feature_index,
            "t_obs": r.t_obs,
            "p_value": r.p_value,
            "reject": r.reject(alpha),
        }
        for r in results
    ]
    close = False
    if isinstance(path_or_stream, (str, Path)):
        fh = open(path_or_stream, "w", newline="")
        close = True
    else:
        fh = path_or_stream
    try:
        if fmt == "json":
            json.dump(records, fh, indent=2)
            fh.write("\n")
        else:
            writer = csv.writer(fh)
            writer.writerow(["feature", "t_obs", "p_value", "reject"])
            for rec in records:
                writer.writerow(
                    [
                        rec["feature"],
                        fmt_float(rec["t_obs"]),
                        fmt_float(rec["p_value"]),
                        str(rec["reject"]).lower(),
                    ]
                )
    finally:
        if close:
            fh.close()


def write_null_stats_csv(path: str | Path, results: Sequence[CrtResult]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["feature", "draw", "t_null"])
        for r in results:
            for b, value in enumerate(r.t_null):
                writer.writerow([r.feature_index, b, fmt_float(value)])


def write_pairs_csv(
    path: str | Path, pairs: Iterable[tuple[float, float]], columns: tuple[str, str]
) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for a, b in pairs:
            writer.writerow([fmt_float(a), fmt_float(b)])


def write_table_csv(path: str | Path, rows: Sequence[dict[str, str]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(TABLE_COLUMNS))
        writer.writeheader()
        writer.writerows(rows)


def report_to_dict(report: ExperimentReport) -> dict[str, Any]:
    return {
        "alpha": report.alpha,
        "rows": [
            {
                "dataset": row.name,
                "p": row.p,
                "relevant": row.n_relevant,
                "power": row.power,
                "type1": row.type1,
            }
            for row in report.rows
        ],
        "pooled_p_values": [
            {
                "dataset": rec.dataset,
                "repeat": rec.repeat,
                "feature": rec.feature,
                "relevant": rec.relevant,
                "p_value": rec.p_value,
            }
            for rec in report.pooled
        ],
        "errors": list(report.errors),
    }


def write_report_json(path: str | Path, report: ExperimentReport) -> None:
    with open(path, "w") as fh:
        json.dump(report_to_dict(report), fh, indent=2)
        fh.write("\n")
