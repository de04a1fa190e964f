"""Command-line interface: generate datasets, test features, run benchmarks.

Exit codes: 0 success, 1 usage/config error, 2 completed with warnings,
3 bridge/protocol failure. Every command is bitwise-reproducible for a
fixed flag set and seed, independently of --threads.
"""

from __future__ import annotations

import argparse
import datetime
import json
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Sequence

import crtkit
from crtkit import dataio, dgp, evaluation
from crtkit.bridge import BridgeClient, BridgeError
from crtkit.core import CrtConfig
from crtkit.crt import test_all_features
from crtkit.registry import (
    SAMPLER_CHOICES,
    Y_MODEL_CHOICES,
    resolve_sampler,
    resolve_y_model,
)

BRIDGE_CMD_ENV = "CRT_BRIDGE_CMD"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_WARNINGS = 2
EXIT_BRIDGE = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # noqa: D102 - argparse hook
        raise UsageError(message)


def _load_config_file(path: str | None, known: set[str]) -> dict[str, Any]:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    if not isinstance(payload, dict):
        raise UsageError(f"config file {path} must hold a JSON object")
    unknown = set(payload) - known
    if unknown:
        raise UsageError(f"config file {path}: unknown keys {sorted(unknown)}")
    return payload


def _merge(args: argparse.Namespace, defaults: dict[str, Any]) -> dict[str, Any]:
    # Precedence: command-line flags > config file > defaults.
    merged = dict(defaults)
    merged.update(_load_config_file(getattr(args, "config", None), set(defaults)))
    for key in defaults:
        value = getattr(args, key.replace("-", "_"), None)
        if value is not None:
            merged[key] = value
    return merged


def _crt_config(options: dict[str, Any]) -> CrtConfig:
    try:
        return CrtConfig(
            num_null_draws=int(options["B"]),
            quantile_grid_size=int(options["K"]),
            alpha=float(options["alpha"]),
            split_fraction=float(options["split_fraction"]),
            master_seed=int(options["seed"]),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _open_bridge(options: dict[str, Any]) -> BridgeClient | None:
    uses_external = options["y_model"] == "external" or options["sampler"] == "external"
    command = options.get("bridge_cmd") or os.environ.get(BRIDGE_CMD_ENV)
    if not uses_external:
        return None
    if not command:
        raise UsageError(
            "external model selected but no --bridge-cmd given "
            f"(or {BRIDGE_CMD_ENV} set)"
        )
    return BridgeClient(command, timeout=float(options["bridge_timeout"]))


def _timestamp() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")


def _write_manifest(
    out_dir: Path, command: str, options: dict[str, Any], outputs: list[str]
) -> None:
    manifest = {
        "command": command,
        "config": options,
        "version": crtkit.__version__,
        "timestamp": _timestamp(),
        "outputs": outputs,
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# generate

_GENERATE_DEFAULTS: dict[str, Any] = {"dgp": None, "n": 500, "seed": 0, "out": None}


def cmd_generate(args: argparse.Namespace) -> int:
    options = _merge(args, _GENERATE_DEFAULTS)
    if not options["dgp"]:
        raise UsageError("--dgp is required")
    if not options["out"]:
        raise UsageError("--out is required")
    try:
        instance = dgp.generate(options["dgp"], int(options["n"]), int(options["seed"]))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    out = Path(options["out"])
    truth = dataio.truth_path_for(out)
    try:
        dataio.write_dataset_csv(out, instance.data)
        dataio.write_truth(truth, instance.spec, int(options["seed"]))
    except OSError as exc:
        raise UsageError(f"cannot write output: {exc}") from exc
    print(f"wrote {out} and {truth}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# test

_TEST_DEFAULTS: dict[str, Any] = {
    "data": None,
    "truth": None,
    "feature": "all",
    "B": 1000,
    "K": 200,
    "alpha": 0.05,
    "split_fraction": 0.8,
    "seed": 0,
    "y_model": "auto",
    "sampler": "knn",
    "bridge_cmd": None,
    "bridge_timeout": 300.0,
    "format": "csv",
    "out": None,
    "emit_null": None,
}


def cmd_test(args: argparse.Namespace) -> int:
    options = _merge(args, _TEST_DEFAULTS)
    if not options["data"]:
        raise UsageError("--data is required")
    if options["format"] not in ("csv", "json"):
        raise UsageError("--format must be csv or json")

    spec = None
    if options["truth"]:
        try:
            spec, _ = dataio.read_truth(options["truth"])
        except (OSError, ValueError, KeyError) as exc:
            raise UsageError(f"cannot read truth sidecar: {exc}") from exc
    if options["sampler"] == "oracle" and spec is None:
        raise UsageError("oracle sampler requires the truth sidecar (--truth)")
    try:
        data = dataio.read_dataset_csv(options["data"], spec)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read dataset: {exc}") from exc

    config = _crt_config(options)
    features: list[int] | None = None
    if options["feature"] != "all":
        try:
            j = int(options["feature"])
        except ValueError:
            raise UsageError("--feature must be an index or 'all'") from None
        if not 0 <= j < data.p:
            raise UsageError(f"feature {j} out of range for p={data.p}")
        features = [j]

    bridge = _open_bridge(options)
    try:
        y_factory = resolve_y_model(options["y_model"], config, bridge)
        sampler_factory = resolve_sampler(options["sampler"], config, spec, bridge)
        scan = test_all_features(
            data, config, y_factory, sampler_factory, features=features
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    finally:
        if bridge is not None:
            bridge.close()

    if options["out"]:
        dataio.write_results(
            options["out"], scan.results, config.alpha, options["format"]
        )
    else:
        dataio.write_results(sys.stdout, scan.results, config.alpha, options["format"])
    if options["emit_null"]:
        dataio.write_null_stats_csv(options["emit_null"], scan.results)

    if scan.errors:
        for j, message in sorted(scan.errors.items()):
            print(f"warning: feature {j} failed: {message}", file=sys.stderr)
        return EXIT_WARNINGS if scan.results else EXIT_USAGE
    return EXIT_OK


# ---------------------------------------------------------------------------
# bench

_BENCH_DEFAULTS: dict[str, Any] = {
    "suite": "table1",
    "n": 500,
    "repeats": 5,
    "B": 1000,
    "K": 200,
    "alpha": 0.05,
    "split_fraction": 0.8,
    "seed": 0,
    "y_model": "auto",
    "sampler": "oracle",
    "bridge_cmd": None,
    "bridge_timeout": 300.0,
    "threads": 1,
    "out_dir": None,
}


def cmd_bench(args: argparse.Namespace) -> int:
    options = _merge(args, _BENCH_DEFAULTS)
    if not options["out_dir"]:
        raise UsageError("--out-dir is required")
    if options["suite"] == "table1":
        names = dgp.TABLE1_NAMES
    elif options["suite"] == "all":
        names = dgp.ALL_NAMES
    else:
        raise UsageError("--suite must be table1 or all")

    config = evaluation.ExperimentConfig(
        dgp_names=names,
        n=int(options["n"]),
        n_repeats=int(options["repeats"]),
        crt=_crt_config(options),
        y_model=options["y_model"],
        sampler=options["sampler"],
    )
    out_dir = Path(options["out_dir"])
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create {out_dir}: {exc}") from exc

    bridge = _open_bridge(options)
    try:
        report = evaluation.run_experiment(
            config, bridge=bridge, n_threads=int(options["threads"])
        )
    finally:
        if bridge is not None:
            bridge.close()

    rows = evaluation.table_report(report)
    outputs = ["table.csv", "report.json", "qq_null.csv"]
    dataio.write_table_csv(out_dir / "table.csv", rows)
    dataio.write_report_json(out_dir / "report.json", report)
    irrelevant = report.pvalues(relevant=False)
    relevant = report.pvalues(relevant=True)
    dataio.write_pairs_csv(
        out_dir / "qq_null.csv",
        evaluation.qq_uniform(irrelevant),
        ("theoretical", "empirical"),
    )
    if relevant.size:
        dataio.write_pairs_csv(
            out_dir / "ecdf_relevant.csv", evaluation.ecdf(relevant), ("x", "F")
        )
        outputs.append("ecdf_relevant.csv")
    if irrelevant.size:
        dataio.write_pairs_csv(
            out_dir / "ecdf_irrelevant.csv", evaluation.ecdf(irrelevant), ("x", "F")
        )
        outputs.append("ecdf_irrelevant.csv")
    outputs.append("manifest.json")
    _write_manifest(out_dir, "bench", options, outputs)

    print(evaluation.render_table(rows))
    if report.errors:
        for line in report.errors:
            print(f"warning: {line}", file=sys.stderr)
        return EXIT_WARNINGS
    return EXIT_OK


# ---------------------------------------------------------------------------


def _build_parser() -> _Parser:
    parser = _Parser(prog="crtkit", description=__doc__)
    parser.add_argument("--version", action="version", version=crtkit.__version__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    gen = sub.add_parser("generate", help="write a synthetic dataset and truth sidecar")
    gen.add_argument("--config", help="JSON config file (flags override)")
    gen.add_argument("--dgp", help="generator name")
    gen.add_argument("--n", type=int, help="row count")
    gen.add_argument("--seed", type=int, help="master seed")
    gen.add_argument("--out", help="output CSV path")
    gen.set_defaults(func=cmd_generate)

    test = sub.add_parser("test", help="test features of a dataset")
    test.add_argument("--config", help="JSON config file (flags override)")
    test.add_argument("--data", help="dataset CSV")
    test.add_argument("--truth", help="truth sidecar JSON")
    test.add_argument("--feature", help="feature index or 'all'")
    test.add_argument("--B", type=int, dest="B", help="null draws per feature")
    test.add_argument("--K", type=int, dest="K", help="quantile grid size")
    test.add_argument("--alpha", type=float, help="rejection level")
    test.add_argument("--split-fraction", type=float, help="train fraction")
    test.add_argument("--seed", type=int, help="master seed")
    test.add_argument("--y-model", choices=Y_MODEL_CHOICES, help="predictive model")
    test.add_argument("--sampler", choices=SAMPLER_CHOICES, help="conditional sampler")
    test.add_argument("--bridge-cmd", help="external worker command")
    test.add_argument("--bridge-timeout", type=float, help="seconds per bridge call")
    test.add_argument("--format", choices=("csv", "json"), help="output format")
    test.add_argument("--out", help="output path (default stdout)")
    test.add_argument("--emit-null", help="CSV path for the null statistics")
    test.set_defaults(func=cmd_test)

    bench = sub.add_parser("bench", help="run the benchmark suite")
    bench.add_argument("--config", help="JSON config file (flags override)")
    bench.add_argument("--suite", help="table1 or all")
    bench.add_argument("--n", type=int, help="rows per dataset")
    bench.add_argument("--repeats", type=int, help="independent repeats")
    bench.add_argument("--B", type=int, dest="B", help="null draws per feature")
    bench.add_argument("--K", type=int, dest="K", help="quantile grid size")
    bench.add_argument("--alpha", type=float, help="rejection level")
    bench.add_argument("--split-fraction", type=float, help="train fraction")
    bench.add_argument("--seed", type=int, help="master seed")
    bench.add_argument("--y-model", choices=Y_MODEL_CHOICES, help="predictive model")
    bench.add_argument("--sampler", choices=SAMPLER_CHOICES, help="conditional sampler")
    bench.add_argument("--bridge-cmd", help="external worker command")
    bench.add_argument("--bridge-timeout", type=float, help="seconds per bridge call")
    bench.add_argument("--threads", type=int, help="worker threads across repeats")
    bench.add_argument("--out-dir", help="output directory")
    bench.set_defaults(func=cmd_bench)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            raise UsageError("a command is required (generate, test, bench)")
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BridgeError as exc:
        print(f"bridge error: {exc}", file=sys.stderr)
        return EXIT_BRIDGE


if __name__ == "__main__":
    sys.exit(main())
